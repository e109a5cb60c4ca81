#ifndef ADVLM_TENSOR_HPP_
#define ADVLM_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace advlm {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t numel() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense (C, H, W) array of doubles, row-major with channels outermost.
///
/// Model inputs must lie in [0, 1]; the same type is used for gradients,
/// which carry no range constraint, so the range check is explicit.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Shape shape, double fill = 0.0);
  ImageTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t c, std::size_t y, std::size_t x) const;

  bool in_unit_range() const;
  // Throws InvalidArgument naming the first offending element.
  void require_unit_range(const std::string& what) const;

  double max_abs_diff(const ImageTensor& other) const;

  bool operator==(const ImageTensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Uniform draws in [lo, hi) from SplitMix64(seed), element order = storage order.
ImageTensor random_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

// Raw tensor file: the ADVT container (see docs/formats.md) holding one tensor.
void save_tensor(const ImageTensor& tensor, const std::filesystem::path& path);
ImageTensor load_tensor(const std::filesystem::path& path);

}  // namespace advlm

#endif  // ADVLM_TENSOR_HPP_
