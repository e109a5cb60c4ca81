#ifndef ADVLM_ATTACKS_HPP_
#define ADVLM_ATTACKS_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "advlm/model.hpp"
#include "advlm/target.hpp"

namespace advlm {

enum class AttackMethod { kFgsm, kPgd, kApgd };

std::string_view method_name(AttackMethod method);
AttackMethod parse_method(std::string_view name);  // "FGSM" | "PGD" | "APGD", case-insensitive

/// Untargeted L-infinity attack settings. `epsilon` is in [0, 1] pixel scale
/// (8/255 means eight grey levels).
struct AttackConfig {
  AttackMethod method = AttackMethod::kPgd;
  double epsilon = 8.0 / 255.0;
  int iterations = 100;
  // PGD: fixed step, default epsilon / 4. APGD: initial step, default 2 epsilon.
  // FGSM ignores it and always steps by epsilon.
  std::optional<double> step_size;
  std::set<std::size_t> input_mask;  // slots to perturb; must be non-empty
  std::uint64_t seed = 0;
  bool random_start = false;

  // Throws InvalidArgument if the config cannot drive a model with
  // `slot_count` inputs. FGSM with iterations != 1 is normalized, not rejected.
  void validate(std::size_t slot_count) const;
  AttackConfig normalized() const;
  double effective_step() const;

  static std::set<std::size_t> all_slots(std::size_t slot_count);
};

struct AttackResult {
  std::vector<ImageTensor> adversarial_inputs;
  std::vector<double> delta_inf_norm;  // per slot; 0 for unmasked slots
  std::vector<double> loss_trace;      // clean point first, then every evaluated iterate
  double best_loss = 0.0;
  std::size_t best_iteration = 0;      // index into loss_trace
  int iterations_used = 0;
};

/// Clamps every element of `candidate` to
/// [max(0, origin - epsilon), min(1, origin + epsilon)].
ImageTensor project_linf(const ImageTensor& candidate, const ImageTensor& origin, double epsilon);

AttackResult fgsm(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config);
AttackResult pgd(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config);
AttackResult apgd(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config);

// Validates `config` against the model and dispatches on config.method.
AttackResult attack(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config);

// Auto-PGD step-size checkpoints for an `iterations` budget:
// w_j = ceil(p_j * iterations) with p_0 = 0, p_1 = 0.22,
// p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06), for p_j <= 1.
// Duplicates (possible for tiny budgets) are dropped.
std::vector<int> apgd_checkpoints(int iterations);

// APGD constants.
inline constexpr double kApgdMomentum = 0.75;
inline constexpr double kApgdRho = 0.75;

}  // namespace advlm

#endif  // ADVLM_ATTACKS_HPP_
