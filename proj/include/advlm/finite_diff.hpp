#ifndef ADVLM_FINITE_DIFF_HPP_
#define ADVLM_FINITE_DIFF_HPP_

#include <span>
#include <string_view>
#include <vector>

#include "advlm/model.hpp"

namespace advlm {

/// Central-difference estimate of dL/dx for every element of every slot:
/// (L(x + h e) - L(x - h e)) / 2h. Every element must lie strictly inside
/// (h, 1 - h) so both probes stay in the model's input range.
std::vector<ImageTensor> finite_diff_grad(const DifferentiableModel& model,
                                          std::span<const ImageTensor> inputs,
                                          std::string_view prompt, const Target& target, double h);

struct GradientComparison {
  double max_relative_error = 0.0;
  std::size_t compared = 0;  // elements not skipped by the magnitude floor
  std::size_t worst_slot = 0;
  std::size_t worst_index = 0;
};

// |a - b| / max(|a|, |b|) per element, skipping elements where both
// magnitudes are below `floor`.
GradientComparison compare_gradients(std::span<const ImageTensor> analytic,
                                     std::span<const ImageTensor> numeric, double floor = 1e-10);

}  // namespace advlm

#endif  // ADVLM_FINITE_DIFF_HPP_
