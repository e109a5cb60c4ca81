#ifndef ADVLM_TOY_MODELS_HPP_
#define ADVLM_TOY_MODELS_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "advlm/advt.hpp"
#include "advlm/model.hpp"

namespace advlm {

// Default label vocabulary shared by the toy classifiers and the toy captioner.
const std::vector<std::string>& default_vocabulary();

/// Desk-scale models with hand-derived gradients. Parameters are drawn
/// uniformly in [-0.5, 0.5) from SplitMix64(seed) in declaration order,
/// row-major, which the Python twin reproduces bit for bit.
class ToyModel : public DifferentiableModel {
 public:
  virtual AdvtKind kind() const = 0;
  virtual std::vector<std::uint32_t> hyperparameters() const = 0;
  virtual std::vector<double> parameters() const = 0;

  // Output vocabulary: class labels for classifiers, words for the captioner.
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 protected:
  explicit ToyModel(std::size_t vocabulary_size);
  std::vector<std::string> vocabulary_;
};

/// Softmax regression on the flattened input: z = W x + b, L = CE(z, y).
class ToyLinearModel : public ToyModel {
 public:
  ToyLinearModel(Shape shape, std::size_t classes, std::uint64_t seed);
  ToyLinearModel(Shape shape, std::size_t classes, std::vector<double> weights,
                 std::vector<double> bias);

  std::string id() const override;
  std::vector<Shape> input_shapes() const override { return {shape_}; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                       const Target& target) const override;
  std::string generate(std::span<const ImageTensor> inputs, std::string_view prompt) const override;

  AdvtKind kind() const override { return AdvtKind::kToyLinear; }
  std::vector<std::uint32_t> hyperparameters() const override;
  std::vector<double> parameters() const override;

  std::size_t classes() const { return classes_; }
  std::vector<double> logits(const ImageTensor& x) const;
  std::size_t predict(std::span<const ImageTensor> inputs) const;
  std::uint32_t resolve_class(const Target& target) const;

 private:
  Shape shape_;
  std::size_t classes_;
  std::vector<double> weights_;  // classes x numel
  std::vector<double> bias_;
};

/// One tanh hidden layer: h = tanh(W1 x + b1), z = W2 h + b2, L = CE(z, y).
class ToyMLPModel : public ToyModel {
 public:
  ToyMLPModel(Shape shape, std::size_t hidden, std::size_t classes, std::uint64_t seed);
  ToyMLPModel(Shape shape, std::size_t hidden, std::size_t classes, std::vector<double> params);

  std::string id() const override;
  std::vector<Shape> input_shapes() const override { return {shape_}; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                       const Target& target) const override;
  std::string generate(std::span<const ImageTensor> inputs, std::string_view prompt) const override;

  AdvtKind kind() const override { return AdvtKind::kToyMlp; }
  std::vector<std::uint32_t> hyperparameters() const override;
  std::vector<double> parameters() const override;

  std::size_t classes() const { return classes_; }
  std::size_t predict(std::span<const ImageTensor> inputs) const;
  std::uint32_t resolve_class(const Target& target) const;

 private:
  void forward(const ImageTensor& x, std::vector<double>& hidden, std::vector<double>& logits) const;

  Shape shape_;
  std::size_t hidden_;
  std::size_t classes_;
  std::vector<double> w1_, b1_, w2_, b2_;
};

/// Two independent linear branches, one per input slot, over a shared label
/// space. L = CE(Wa x0 + ba, y) + CE(Wb x1 + bb, y); the prediction is the
/// argmax of the summed log-probabilities.
class ToyTwoBranchModel : public ToyModel {
 public:
  ToyTwoBranchModel(Shape first, Shape second, std::size_t classes, std::uint64_t seed);
  ToyTwoBranchModel(Shape first, Shape second, std::size_t classes, std::vector<double> params);

  std::string id() const override;
  std::vector<Shape> input_shapes() const override { return {first_, second_}; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                       const Target& target) const override;
  std::string generate(std::span<const ImageTensor> inputs, std::string_view prompt) const override;

  AdvtKind kind() const override { return AdvtKind::kToyTwoBranch; }
  std::vector<std::uint32_t> hyperparameters() const override;
  std::vector<double> parameters() const override;

  std::size_t classes() const { return classes_; }
  std::size_t predict(std::span<const ImageTensor> inputs) const;
  std::uint32_t resolve_class(const Target& target) const;

  // Zeroes every weight and bias of one branch.
  void silence_branch(std::size_t slot);

 private:
  Shape first_, second_;
  std::size_t classes_;
  std::vector<double> wa_, ba_, wb_, bb_;
};

/// Caption-like toy: an independent linear head per output position over a
/// word vocabulary. L is the mean token cross-entropy over the target tokens.
class ToyCaptionModel : public ToyModel {
 public:
  ToyCaptionModel(Shape shape, std::size_t length, std::size_t vocab, std::uint64_t seed);
  ToyCaptionModel(Shape shape, std::size_t length, std::size_t vocab, std::vector<double> params);

  std::string id() const override;
  std::vector<Shape> input_shapes() const override { return {shape_}; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                       const Target& target) const override;
  std::string generate(std::span<const ImageTensor> inputs, std::string_view prompt) const override;

  AdvtKind kind() const override { return AdvtKind::kToyCaption; }
  std::vector<std::uint32_t> hyperparameters() const override;
  std::vector<double> parameters() const override;

  std::size_t length() const { return length_; }
  std::vector<std::uint32_t> decode(const ImageTensor& x) const;
  TokenSequence resolve_tokens(const Target& target) const;

 private:
  Shape shape_;
  std::size_t length_;
  std::size_t vocab_;
  std::vector<double> params_;  // per position: W_t (vocab x numel) then b_t (vocab)
};

void save_toy_model(const ToyModel& model, const std::filesystem::path& path);
std::unique_ptr<ToyModel> load_toy_model(const std::filesystem::path& path);
std::unique_ptr<ToyModel> toy_model_from_advt(const AdvtFile& file);

}  // namespace advlm

#endif  // ADVLM_TOY_MODELS_HPP_
