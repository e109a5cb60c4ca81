#include "advlm/finite_diff.hpp"

#include <cmath>
#include <sstream>

#include "advlm/error.hpp"

namespace advlm {

std::vector<ImageTensor> finite_diff_grad(const DifferentiableModel& model,
                                          std::span<const ImageTensor> inputs,
                                          std::string_view prompt, const Target& target, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const auto data = inputs[s].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!(data[i] > h && data[i] < 1.0 - h)) {
        std::ostringstream os;
        os << "slot " << s << " element " << i << " = " << data[i]
           << " is too close to the [0, 1] boundary for h = " << h;
        throw InvalidArgument(os.str());
      }
    }
  }

  std::vector<ImageTensor> probe(inputs.begin(), inputs.end());
  std::vector<ImageTensor> grads;
  grads.reserve(inputs.size());
  for (std::size_t s = 0; s < probe.size(); ++s) {
    ImageTensor g(probe[s].shape());
    for (std::size_t i = 0; i < probe[s].size(); ++i) {
      const double x = probe[s][i];
      probe[s][i] = x + h;
      const double up = loss_only(model, probe, prompt, target);
      probe[s][i] = x - h;
      const double down = loss_only(model, probe, prompt, target);
      probe[s][i] = x;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

GradientComparison compare_gradients(std::span<const ImageTensor> analytic,
                                     std::span<const ImageTensor> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("slot count mismatch");
  GradientComparison cmp;
  for (std::size_t s = 0; s < analytic.size(); ++s) {
    if (analytic[s].shape() != numeric[s].shape()) throw InvalidArgument("gradient shape mismatch");
    for (std::size_t i = 0; i < analytic[s].size(); ++i) {
      const double a = analytic[s][i], b = numeric[s][i];
      const double scale = std::max(std::abs(a), std::abs(b));
      if (scale < floor) continue;
      ++cmp.compared;
      const double rel = std::abs(a - b) / scale;
      if (rel > cmp.max_relative_error) {
        cmp.max_relative_error = rel;
        cmp.worst_slot = s;
        cmp.worst_index = i;
      }
    }
  }
  return cmp;
}

}  // namespace advlm
