#ifndef ADVLM_TESTS_TEST_MODELS_HPP_
#define ADVLM_TESTS_TEST_MODELS_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "advlm/model.hpp"

namespace advlm::testing {

// L = sum (x - c)^2 over every slot; gradient 2 (x - c).
class QuadraticModel : public DifferentiableModel {
 public:
  QuadraticModel(std::vector<Shape> shapes, double center) : shapes_(std::move(shapes)), center_(center) {}

  std::string id() const override { return "quadratic"; }
  std::vector<Shape> input_shapes() const override { return shapes_; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view, const Target&) const override {
    LossAndGrad out;
    for (const auto& x : inputs) {
      ImageTensor g(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out.loss += (x[i] - center_) * (x[i] - center_);
        g[i] = 2.0 * (x[i] - center_);
      }
      out.grads.push_back(std::move(g));
    }
    return out;
  }
  std::string generate(std::span<const ImageTensor>, std::string_view) const override { return "quadratic"; }

 private:
  std::vector<Shape> shapes_;
  double center_;
};

// Constant loss, zero gradient.
class ConstantModel : public DifferentiableModel {
 public:
  explicit ConstantModel(Shape shape) : shape_(shape) {}
  std::string id() const override { return "constant"; }
  std::vector<Shape> input_shapes() const override { return {shape_}; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view, const Target&) const override {
    LossAndGrad out{1.5, {}};
    for (const auto& x : inputs) out.grads.emplace_back(x.shape());
    return out;
  }
  std::string generate(std::span<const ImageTensor>, std::string_view) const override { return "constant"; }

 private:
  Shape shape_;
};

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "advlm-test-XXXXXX").string();
    path_ = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace advlm::testing

#endif  // ADVLM_TESTS_TEST_MODELS_HPP_
