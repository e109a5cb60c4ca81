#ifndef ADVLM_MODEL_HPP_
#define ADVLM_MODEL_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advlm/target.hpp"
#include "advlm/tensor.hpp"

namespace advlm {

struct LossAndGrad {
  double loss = 0.0;
  std::vector<ImageTensor> grads;  // one per input slot, shape-matched
};

/// The contract attacks optimize against: a scalar loss L(f(x), y) over one
/// or more image input slots, its gradient with respect to every slot, and
/// text generation for scoring.
///
/// Implementations must be safe for concurrent calls on a const instance.
class DifferentiableModel {
 public:
  virtual ~DifferentiableModel() = default;

  virtual std::string id() const = 0;
  virtual std::vector<Shape> input_shapes() const = 0;
  std::size_t slot_count() const { return input_shapes().size(); }

  // Unchecked evaluation; callers go through loss_and_grad().
  virtual LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                               const Target& target) const = 0;

  virtual std::string generate(std::span<const ImageTensor> inputs,
                               std::string_view prompt) const = 0;
};

// Validates slot count, shapes and input range before the call, then finite
// loss and gradient shapes after it.
LossAndGrad loss_and_grad(const DifferentiableModel& model, std::span<const ImageTensor> inputs,
                          std::string_view prompt, const Target& target);

// Loss only; same checks as loss_and_grad.
double loss_only(const DifferentiableModel& model, std::span<const ImageTensor> inputs,
                 std::string_view prompt, const Target& target);

}  // namespace advlm

#endif  // ADVLM_MODEL_HPP_
