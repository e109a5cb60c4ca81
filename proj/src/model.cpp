#include "advlm/model.hpp"

#include <cmath>

#include "advlm/error.hpp"

namespace advlm {

namespace {

void check_inputs(const DifferentiableModel& model, std::span<const ImageTensor> inputs) {
  const auto shapes = model.input_shapes();
  if (inputs.size() != shapes.size()) {
    throw InvalidArgument("model " + model.id() + " expects " + std::to_string(shapes.size()) +
                          " input slot(s), got " + std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape() != shapes[i]) {
      throw InvalidArgument("slot " + std::to_string(i) + " has shape " +
                            inputs[i].shape().str() + ", model expects " + shapes[i].str());
    }
    inputs[i].require_unit_range("slot " + std::to_string(i));
  }
}

}  // namespace

LossAndGrad loss_and_grad(const DifferentiableModel& model, std::span<const ImageTensor> inputs,
                          std::string_view prompt, const Target& target) {
  check_inputs(model, inputs);
  LossAndGrad out = model.evaluate(inputs, prompt, target);
  if (!std::isfinite(out.loss)) {
    throw ModelError("model " + model.id() + " returned a non-finite loss");
  }
  if (out.grads.size() != inputs.size()) {
    throw ModelError("model " + model.id() + " returned " + std::to_string(out.grads.size()) +
                     " gradient(s) for " + std::to_string(inputs.size()) + " slot(s)");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (out.grads[i].shape() != inputs[i].shape() || out.grads[i].size() != inputs[i].size()) {
      throw ModelError("gradient for slot " + std::to_string(i) + " has shape " +
                       out.grads[i].shape().str() + ", input has " + inputs[i].shape().str());
    }
  }
  return out;
}

double loss_only(const DifferentiableModel& model, std::span<const ImageTensor> inputs,
                 std::string_view prompt, const Target& target) {
  return loss_and_grad(model, inputs, prompt, target).loss;
}

}  // namespace advlm
