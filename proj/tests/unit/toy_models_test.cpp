#include <cmath>

#include <gtest/gtest.h>

#include "advlm/error.hpp"
#include "advlm/finite_diff.hpp"
#include "advlm/rng.hpp"
#include "advlm/toy_models.hpp"
#include "test_models.hpp"

namespace advlm {
namespace {

// Values from tests/oracles/toy_linear_seed7.py.
TEST(ToyLinearModelTest, MatchesIndependentOracle) {
  const Shape shape{1, 2, 2};
  ToyLinearModel model(shape, 3, 7);
  const ImageTensor x = random_tensor(shape, 1007, 0.1, 0.9);
  const std::vector<double> want_x = {0.8194303178450271, 0.21886576711000227, 0.5247347503080501,
                                      0.2317718323898486};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x[i], want_x[i]);

  const std::vector<ImageTensor> inputs{x};
  const LossAndGrad lg = loss_and_grad(model, inputs, "", ClassIndex{1});
  EXPECT_NEAR(lg.loss, 1.1044159819553987, 1e-14);
  const std::vector<double> want_g = {-0.10606753987279562, -0.0559713750546872, 0.08909845335290116,
                                      0.2650907815689758};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(lg.grads[0][i], want_g[i], 1e-14);
}

// Values from tests/oracles/mlp_seed13_sympy.py (symbolic differentiation).
TEST(ToyMLPModelTest, MatchesSymbolicOracle) {
  const Shape shape{1, 2, 3};
  ToyMLPModel model(shape, 5, 3, 13);
  const std::vector<ImageTensor> inputs{random_tensor(shape, 1013, 0.1, 0.9)};
  const LossAndGrad lg = loss_and_grad(model, inputs, "", ClassIndex{2});
  EXPECT_NEAR(lg.loss, 1.4840721571631101055, 1e-13);
  const std::vector<double> want = {-0.17809611172530360185, 0.16724027906101158125, -0.00060043016356050379,
                                    0.065412057476088870964, -0.094552441201388993725, 0.024655634701340696195};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(lg.grads[0][i], want[i], 1e-13);
}

struct GradCase {
  std::string name;
  std::unique_ptr<DifferentiableModel> model;
  Target target;
};

std::vector<GradCase> grad_cases() {
  std::vector<GradCase> out;
  out.push_back({"linear", std::make_unique<ToyLinearModel>(Shape{3, 4, 4}, 5, 21), ClassIndex{2}});
  out.push_back({"mlp", std::make_unique<ToyMLPModel>(Shape{3, 3, 3}, 8, 4, 22), ClassIndex{3}});
  out.push_back({"two-branch", std::make_unique<ToyTwoBranchModel>(Shape{3, 2, 2}, Shape{1, 3, 3}, 6, 23),
                 ClassIndex{0}});
  out.push_back({"caption", std::make_unique<ToyCaptionModel>(Shape{3, 3, 3}, 4, 12, 24),
                 TokenSequence{{1, 7, 3}}});
  return out;
}

TEST(FiniteDiffTest, AnalyticGradientsAgree) {
  for (const auto& c : grad_cases()) {
    std::vector<ImageTensor> inputs;
    std::size_t s = 0;
    for (const Shape& shape : c.model->input_shapes()) inputs.push_back(random_tensor(shape, 100 + s++, 0.05, 0.95));
    const LossAndGrad lg = loss_and_grad(*c.model, inputs, "", c.target);
    const auto numeric = finite_diff_grad(*c.model, inputs, "", c.target, 1e-5);
    const auto cmp = compare_gradients(lg.grads, numeric);
    EXPECT_LT(cmp.max_relative_error, 1e-5) << c.name;
    EXPECT_GT(cmp.compared, 0u) << c.name;
  }
}

TEST(FiniteDiffTest, RequiresInteriorPoints) {
  ToyLinearModel model(Shape{1, 1, 2}, 2, 1);
  const std::vector<ImageTensor> inputs{ImageTensor(Shape{1, 1, 2}, std::vector<double>{0.0, 0.5})};
  EXPECT_THROW(finite_diff_grad(model, inputs, "", ClassIndex{0}, 1e-5), InvalidArgument);
}

TEST(FiniteDiffTest, CompareSkipsTinyElements) {
  const std::vector<ImageTensor> a{ImageTensor(Shape{1, 1, 2}, std::vector<double>{1e-12, 1.0})};
  const std::vector<ImageTensor> b{ImageTensor(Shape{1, 1, 2}, std::vector<double>{-1e-12, 1.0})};
  const auto cmp = compare_gradients(a, b);
  EXPECT_EQ(cmp.compared, 1u);
  EXPECT_EQ(cmp.max_relative_error, 0.0);
}

TEST(ModelContractTest, LossAndGradValidatesInputs) {
  ToyLinearModel model(Shape{1, 2, 2}, 3, 7);
  EXPECT_THROW(loss_and_grad(model, std::vector<ImageTensor>{}, "", ClassIndex{0}), InvalidArgument);
  const std::vector<ImageTensor> wrong_shape{ImageTensor(Shape{1, 2, 3}, 0.5)};
  EXPECT_THROW(loss_and_grad(model, wrong_shape, "", ClassIndex{0}), InvalidArgument);
  const std::vector<ImageTensor> out_of_range{ImageTensor(Shape{1, 2, 2}, 1.5)};
  EXPECT_THROW(loss_and_grad(model, out_of_range, "", ClassIndex{0}), InvalidArgument);
  const std::vector<ImageTensor> ok{ImageTensor(Shape{1, 2, 2}, 0.5)};
  EXPECT_THROW(loss_and_grad(model, ok, "", ClassIndex{3}), InvalidArgument);
  EXPECT_NO_THROW(loss_and_grad(model, ok, "", ClassIndex{2}));
}

TEST(ToyModelsTest, PromptDoesNotChangeLoss) {
  ToyMLPModel model(Shape{3, 2, 2}, 4, 5, 9);
  const std::vector<ImageTensor> x{random_tensor(Shape{3, 2, 2}, 5)};
  EXPECT_EQ(loss_only(model, x, "a", ClassIndex{1}), loss_only(model, x, "something else", ClassIndex{1}));
}

TEST(ToyModelsTest, ReferenceTargetsResolveToMajorityLabel) {
  ToyLinearModel model(Shape{1, 2, 2}, 4, 7);  // labels cat, dog, bus, tree
  EXPECT_EQ(model.resolve_class(ReferenceSet{{"Dog", "dog", "a bus", "dog."}}), 1u);
  EXPECT_EQ(model.resolve_class(ReferenceSet{{"the bus", "cat"}}), 0u);  // tie goes to the lower index
  EXPECT_THROW(model.resolve_class(ReferenceSet{{"zebra"}}), InvalidArgument);
}

TEST(ToyModelsTest, GenerateNamesThePredictedLabel) {
  ToyLinearModel model(Shape{3, 2, 2}, 10, 4);
  const std::vector<ImageTensor> x{random_tensor(Shape{3, 2, 2}, 8)};
  EXPECT_EQ(model.generate(x, ""), model.vocabulary()[model.predict(x)]);
}

TEST(ToyCaptionModelTest, DecodesFixedLengthCaptions) {
  ToyCaptionModel model(Shape{3, 2, 2}, 4, 12, 3);
  const std::vector<ImageTensor> x{random_tensor(Shape{3, 2, 2}, 1)};
  const auto tokens = model.decode(x[0]);
  ASSERT_EQ(tokens.size(), 4u);
  std::string want;
  for (auto t : tokens) want += (want.empty() ? "" : " ") + model.vocabulary()[t];
  EXPECT_EQ(model.generate(x, ""), want);
}

TEST(ToyCaptionModelTest, ReferenceTargetUsesInVocabularyWords) {
  ToyCaptionModel model(Shape{1, 1, 1}, 3, 12, 3);
  const TokenSequence seq = model.resolve_tokens(ReferenceSet{{"zebra", "a dog near the bus and a tree"}});
  EXPECT_EQ(seq.tokens, (std::vector<std::uint32_t>{1, 2, 3}));
}

TEST(ToyTwoBranchModelTest, SilencedBranchHasZeroGradient) {
  ToyTwoBranchModel model(Shape{1, 2, 2}, Shape{1, 2, 2}, 3, 5);
  model.silence_branch(1);
  const std::vector<ImageTensor> x{random_tensor(Shape{1, 2, 2}, 1), random_tensor(Shape{1, 2, 2}, 2)};
  const LossAndGrad lg = loss_and_grad(model, x, "", ClassIndex{0});
  for (double g : lg.grads[1].values()) EXPECT_EQ(g, 0.0);
  // A silenced branch contributes log(3): uniform logits.
  const std::vector<ImageTensor> x0{x[0]};
  ToyLinearModel branch(Shape{1, 2, 2}, 3, std::vector<double>(12), std::vector<double>(3));
  EXPECT_NEAR(loss_only(branch, x0, "", ClassIndex{0}), std::log(3.0), 1e-15);
}

TEST(ToyModelsTest, SaveLoadPreservesParametersAtFloatPrecision) {
  testing::TempDir dir;
  std::vector<std::unique_ptr<ToyModel>> models;
  models.push_back(std::make_unique<ToyLinearModel>(Shape{1, 2, 2}, 3, 7));
  models.push_back(std::make_unique<ToyMLPModel>(Shape{1, 2, 3}, 5, 3, 13));
  models.push_back(std::make_unique<ToyTwoBranchModel>(Shape{1, 2, 2}, Shape{3, 1, 1}, 4, 2));
  models.push_back(std::make_unique<ToyCaptionModel>(Shape{1, 2, 2}, 3, 6, 2));
  for (const auto& m : models) {
    save_toy_model(*m, dir / "m.advt");
    const auto loaded = load_toy_model(dir / "m.advt");
    EXPECT_EQ(loaded->id(), m->id());
    EXPECT_EQ(loaded->kind(), m->kind());
    const auto a = m->parameters();
    const auto b = loaded->parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
    // Reload of a reload is exact.
    save_toy_model(*loaded, dir / "m2.advt");
    EXPECT_EQ(load_toy_model(dir / "m2.advt")->parameters(), b);
  }
}

TEST(ToyModelsTest, LoadRejectsTensorFiles) {
  testing::TempDir dir;
  save_tensor(ImageTensor(Shape{1, 1, 1}, 0.5), dir / "t.advt");
  EXPECT_THROW(load_toy_model(dir / "t.advt"), InvalidArgument);
}

}  // namespace
}  // namespace advlm
