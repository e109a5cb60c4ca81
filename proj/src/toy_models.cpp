#include "advlm/toy_models.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "advlm/error.hpp"
#include "advlm/metrics.hpp"
#include "advlm/rng.hpp"

namespace advlm {

namespace {

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> residual;  // softmax(z) - onehot(y)
};

CrossEntropy cross_entropy(const std::vector<double>& logits, std::size_t label) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double lse = m + std::log(sum);
  CrossEntropy ce;
  ce.loss = lse - logits[label];
  ce.residual.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    ce.residual[k] = std::exp(logits[k] - lse) - (k == label ? 1.0 : 0.0);
  }
  return ce;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

std::vector<double> draw(SplitMix64& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform01() - 0.5;
  return out;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// z = W x + b for a (rows x x.size()) row-major W.
std::vector<double> affine(const double* w, const double* b, std::size_t rows,
                           std::span<const double> x) {
  std::vector<double> z(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    const double* row = w + k * x.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    z[k] = acc + b[k];
  }
  return z;
}

// grad += W^T r, scaled.
void accumulate_transpose(const double* w, const std::vector<double>& r, double scale,
                          std::span<double> grad) {
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double rk = r[k] * scale;
    if (rk == 0.0) continue;
    const double* row = w + k * grad.size();
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += row[j] * rk;
  }
}

std::uint32_t resolve_label(const Target& target, const std::vector<std::string>& labels,
                            std::size_t classes) {
  if (const auto* c = std::get_if<ClassIndex>(&target)) {
    if (c->value >= classes) {
      throw InvalidArgument("class index " + std::to_string(c->value) + " out of range for " +
                            std::to_string(classes) + " classes");
    }
    return c->value;
  }
  if (const auto* refs = std::get_if<ReferenceSet>(&target)) {
    // Most frequent normalized answer that names a class; ties to the lowest index.
    std::vector<std::size_t> votes(classes, 0);
    for (const std::string& text : refs->texts) {
      const std::string norm = normalize_answer(text);
      for (std::size_t k = 0; k < classes; ++k) {
        if (labels[k] == norm) ++votes[k];
      }
    }
    const auto best = std::max_element(votes.begin(), votes.end());
    if (*best == 0) throw InvalidArgument("no reference answer matches a class label");
    return static_cast<std::uint32_t>(best - votes.begin());
  }
  throw InvalidArgument("classifier toys accept class-index or reference-set targets");
}

void check_params(std::size_t got, std::size_t want, const char* model) {
  if (got != want) {
    throw InvalidArgument(std::string(model) + " expects " + std::to_string(want) +
                          " parameters, got " + std::to_string(got));
  }
}

void check_positive(std::size_t v, const char* what) {
  if (v == 0) throw InvalidArgument(std::string(what) + " must be positive");
}

void check_shape(const Shape& s) {
  if (s.numel() == 0) throw InvalidArgument("input shape must be positive, got " + s.str());
}

std::string shape_tag(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

}  // namespace

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> words = {
      "cat",   "dog",   "bus",    "tree",   "horse", "car",   "bird",  "boat",
      "pizza", "train", "red",    "blue",   "green", "man",   "woman", "street",
      "grass", "water", "sky",    "table",  "plate", "ball",  "field", "beach",
      "road",  "snow",  "kite",   "clock",  "bench", "sign",  "yes",   "no",
      "white", "black", "person", "bike",   "sheep", "cow",   "phone", "cake"};
  return words;
}

ToyModel::ToyModel(std::size_t vocabulary_size) {
  const auto& words = default_vocabulary();
  vocabulary_.reserve(vocabulary_size);
  for (std::size_t i = 0; i < vocabulary_size; ++i) {
    vocabulary_.push_back(i < words.size() ? words[i] : "label" + std::to_string(i));
  }
}

// ---------------------------------------------------------------------------
// ToyLinearModel

ToyLinearModel::ToyLinearModel(Shape shape, std::size_t classes, std::uint64_t seed)
    : ToyModel(classes), shape_(shape), classes_(classes) {
  check_shape(shape);
  if (classes < 2) throw InvalidArgument("toy-linear needs at least 2 classes");
  SplitMix64 rng(seed);
  weights_ = draw(rng, classes * shape.numel());
  bias_ = draw(rng, classes);
}

ToyLinearModel::ToyLinearModel(Shape shape, std::size_t classes, std::vector<double> weights,
                               std::vector<double> bias)
    : ToyModel(classes), shape_(shape), classes_(classes), weights_(std::move(weights)),
      bias_(std::move(bias)) {
  check_shape(shape);
  if (classes < 2) throw InvalidArgument("toy-linear needs at least 2 classes");
  check_params(weights_.size(), classes * shape.numel(), "toy-linear weights");
  check_params(bias_.size(), classes, "toy-linear bias");
}

std::string ToyLinearModel::id() const {
  return "toy-linear-" + shape_tag(shape_) + "-k" + std::to_string(classes_);
}

std::vector<double> ToyLinearModel::logits(const ImageTensor& x) const {
  return affine(weights_.data(), bias_.data(), classes_, x.data());
}

std::uint32_t ToyLinearModel::resolve_class(const Target& target) const {
  return resolve_label(target, vocabulary_, classes_);
}

LossAndGrad ToyLinearModel::evaluate(std::span<const ImageTensor> inputs, std::string_view,
                                     const Target& target) const {
  const ImageTensor& x = inputs[0];
  const CrossEntropy ce = cross_entropy(logits(x), resolve_class(target));
  LossAndGrad out;
  out.loss = ce.loss;
  out.grads.emplace_back(shape_);
  accumulate_transpose(weights_.data(), ce.residual, 1.0, out.grads[0].data());
  return out;
}

std::size_t ToyLinearModel::predict(std::span<const ImageTensor> inputs) const {
  return argmax(logits(inputs[0]));
}

std::string ToyLinearModel::generate(std::span<const ImageTensor> inputs, std::string_view) const {
  return vocabulary_[predict(inputs)];
}

std::vector<std::uint32_t> ToyLinearModel::hyperparameters() const {
  return {static_cast<std::uint32_t>(classes_)};
}

std::vector<double> ToyLinearModel::parameters() const {
  std::vector<double> p = weights_;
  p.insert(p.end(), bias_.begin(), bias_.end());
  return p;
}

// ---------------------------------------------------------------------------
// ToyMLPModel

ToyMLPModel::ToyMLPModel(Shape shape, std::size_t hidden, std::size_t classes,
                         std::uint64_t seed)
    : ToyModel(classes), shape_(shape), hidden_(hidden), classes_(classes) {
  check_shape(shape);
  check_positive(hidden, "hidden width");
  if (classes < 2) throw InvalidArgument("toy-mlp needs at least 2 classes");
  SplitMix64 rng(seed);
  w1_ = draw(rng, hidden * shape.numel());
  b1_ = draw(rng, hidden);
  w2_ = draw(rng, classes * hidden);
  b2_ = draw(rng, classes);
}

ToyMLPModel::ToyMLPModel(Shape shape, std::size_t hidden, std::size_t classes,
                         std::vector<double> params)
    : ToyModel(classes), shape_(shape), hidden_(hidden), classes_(classes) {
  check_shape(shape);
  check_positive(hidden, "hidden width");
  if (classes < 2) throw InvalidArgument("toy-mlp needs at least 2 classes");
  const std::size_t d = shape.numel();
  check_params(params.size(), hidden * d + hidden + classes * hidden + classes, "toy-mlp");
  auto it = params.begin();
  w1_.assign(it, it + hidden * d), it += hidden * d;
  b1_.assign(it, it + hidden), it += hidden;
  w2_.assign(it, it + classes * hidden), it += classes * hidden;
  b2_.assign(it, it + classes);
}

std::string ToyMLPModel::id() const {
  return "toy-mlp-" + shape_tag(shape_) + "-h" + std::to_string(hidden_) + "-k" +
         std::to_string(classes_);
}

void ToyMLPModel::forward(const ImageTensor& x, std::vector<double>& hidden,
                          std::vector<double>& logits) const {
  hidden = affine(w1_.data(), b1_.data(), hidden_, x.data());
  for (double& h : hidden) h = std::tanh(h);
  logits = affine(w2_.data(), b2_.data(), classes_, hidden);
}

std::uint32_t ToyMLPModel::resolve_class(const Target& target) const {
  return resolve_label(target, vocabulary_, classes_);
}

LossAndGrad ToyMLPModel::evaluate(std::span<const ImageTensor> inputs, std::string_view,
                                  const Target& target) const {
  std::vector<double> hidden, logits;
  forward(inputs[0], hidden, logits);
  const CrossEntropy ce = cross_entropy(logits, resolve_class(target));

  std::vector<double> d_pre(hidden_, 0.0);
  accumulate_transpose(w2_.data(), ce.residual, 1.0, d_pre);
  for (std::size_t i = 0; i < hidden_; ++i) d_pre[i] *= 1.0 - hidden[i] * hidden[i];

  LossAndGrad out;
  out.loss = ce.loss;
  out.grads.emplace_back(shape_);
  accumulate_transpose(w1_.data(), d_pre, 1.0, out.grads[0].data());
  return out;
}

std::size_t ToyMLPModel::predict(std::span<const ImageTensor> inputs) const {
  std::vector<double> hidden, logits;
  forward(inputs[0], hidden, logits);
  return argmax(logits);
}

std::string ToyMLPModel::generate(std::span<const ImageTensor> inputs, std::string_view) const {
  return vocabulary_[predict(inputs)];
}

std::vector<std::uint32_t> ToyMLPModel::hyperparameters() const {
  return {static_cast<std::uint32_t>(hidden_), static_cast<std::uint32_t>(classes_)};
}

std::vector<double> ToyMLPModel::parameters() const {
  std::vector<double> p = w1_;
  p.insert(p.end(), b1_.begin(), b1_.end());
  p.insert(p.end(), w2_.begin(), w2_.end());
  p.insert(p.end(), b2_.begin(), b2_.end());
  return p;
}

// ---------------------------------------------------------------------------
// ToyTwoBranchModel

ToyTwoBranchModel::ToyTwoBranchModel(Shape first, Shape second, std::size_t classes,
                                     std::uint64_t seed)
    : ToyModel(classes), first_(first), second_(second), classes_(classes) {
  check_shape(first);
  check_shape(second);
  if (classes < 2) throw InvalidArgument("toy-two-branch needs at least 2 classes");
  SplitMix64 rng(seed);
  wa_ = draw(rng, classes * first.numel());
  ba_ = draw(rng, classes);
  wb_ = draw(rng, classes * second.numel());
  bb_ = draw(rng, classes);
}

ToyTwoBranchModel::ToyTwoBranchModel(Shape first, Shape second, std::size_t classes,
                                     std::vector<double> params)
    : ToyModel(classes), first_(first), second_(second), classes_(classes) {
  check_shape(first);
  check_shape(second);
  if (classes < 2) throw InvalidArgument("toy-two-branch needs at least 2 classes");
  const std::size_t da = classes * first.numel(), db = classes * second.numel();
  check_params(params.size(), da + classes + db + classes, "toy-two-branch");
  auto it = params.begin();
  wa_.assign(it, it + da), it += da;
  ba_.assign(it, it + classes), it += classes;
  wb_.assign(it, it + db), it += db;
  bb_.assign(it, it + classes);
}

std::string ToyTwoBranchModel::id() const {
  return "toy-two-branch-" + shape_tag(first_) + "+" + shape_tag(second_) + "-k" +
         std::to_string(classes_);
}

std::uint32_t ToyTwoBranchModel::resolve_class(const Target& target) const {
  return resolve_label(target, vocabulary_, classes_);
}

LossAndGrad ToyTwoBranchModel::evaluate(std::span<const ImageTensor> inputs, std::string_view,
                                        const Target& target) const {
  const std::uint32_t y = resolve_class(target);
  const CrossEntropy a = cross_entropy(affine(wa_.data(), ba_.data(), classes_, inputs[0].data()), y);
  const CrossEntropy b = cross_entropy(affine(wb_.data(), bb_.data(), classes_, inputs[1].data()), y);
  LossAndGrad out;
  out.loss = a.loss + b.loss;
  out.grads.emplace_back(first_);
  out.grads.emplace_back(second_);
  accumulate_transpose(wa_.data(), a.residual, 1.0, out.grads[0].data());
  accumulate_transpose(wb_.data(), b.residual, 1.0, out.grads[1].data());
  return out;
}

std::size_t ToyTwoBranchModel::predict(std::span<const ImageTensor> inputs) const {
  auto la = log_softmax(affine(wa_.data(), ba_.data(), classes_, inputs[0].data()));
  const auto lb = log_softmax(affine(wb_.data(), bb_.data(), classes_, inputs[1].data()));
  for (std::size_t k = 0; k < classes_; ++k) la[k] += lb[k];
  return argmax(la);
}

std::string ToyTwoBranchModel::generate(std::span<const ImageTensor> inputs,
                                        std::string_view) const {
  return vocabulary_[predict(inputs)];
}

void ToyTwoBranchModel::silence_branch(std::size_t slot) {
  if (slot > 1) throw InvalidArgument("toy-two-branch has slots 0 and 1");
  auto& w = slot == 0 ? wa_ : wb_;
  auto& b = slot == 0 ? ba_ : bb_;
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
}

std::vector<std::uint32_t> ToyTwoBranchModel::hyperparameters() const {
  return {static_cast<std::uint32_t>(classes_)};
}

std::vector<double> ToyTwoBranchModel::parameters() const {
  std::vector<double> p = wa_;
  p.insert(p.end(), ba_.begin(), ba_.end());
  p.insert(p.end(), wb_.begin(), wb_.end());
  p.insert(p.end(), bb_.begin(), bb_.end());
  return p;
}

// ---------------------------------------------------------------------------
// ToyCaptionModel

ToyCaptionModel::ToyCaptionModel(Shape shape, std::size_t length, std::size_t vocab,
                                 std::uint64_t seed)
    : ToyModel(vocab), shape_(shape), length_(length), vocab_(vocab) {
  check_shape(shape);
  check_positive(length, "caption length");
  if (vocab < 2) throw InvalidArgument("toy-caption needs at least 2 words");
  SplitMix64 rng(seed);
  params_ = draw(rng, length * (vocab * shape.numel() + vocab));
}

ToyCaptionModel::ToyCaptionModel(Shape shape, std::size_t length, std::size_t vocab,
                                 std::vector<double> params)
    : ToyModel(vocab), shape_(shape), length_(length), vocab_(vocab), params_(std::move(params)) {
  check_shape(shape);
  check_positive(length, "caption length");
  if (vocab < 2) throw InvalidArgument("toy-caption needs at least 2 words");
  check_params(params_.size(), length * (vocab * shape.numel() + vocab), "toy-caption");
}

std::string ToyCaptionModel::id() const {
  return "toy-caption-" + shape_tag(shape_) + "-t" + std::to_string(length_) + "-v" +
         std::to_string(vocab_);
}

std::vector<std::uint32_t> ToyCaptionModel::decode(const ImageTensor& x) const {
  const std::size_t d = shape_.numel();
  const std::size_t stride = vocab_ * d + vocab_;
  std::vector<std::uint32_t> out;
  for (std::size_t t = 0; t < length_; ++t) {
    const double* w = params_.data() + t * stride;
    out.push_back(static_cast<std::uint32_t>(argmax(affine(w, w + vocab_ * d, vocab_, x.data()))));
  }
  return out;
}

TokenSequence ToyCaptionModel::resolve_tokens(const Target& target) const {
  if (const auto* seq = std::get_if<TokenSequence>(&target)) {
    if (seq->tokens.empty() || seq->tokens.size() > length_) {
      throw InvalidArgument("token target must hold 1.." + std::to_string(length_) + " tokens");
    }
    for (std::uint32_t tok : seq->tokens) {
      if (tok >= vocab_) throw InvalidArgument("token id " + std::to_string(tok) + " out of vocabulary");
    }
    return *seq;
  }
  if (const auto* refs = std::get_if<ReferenceSet>(&target)) {
    std::unordered_map<std::string, std::uint32_t> index;
    for (std::size_t i = 0; i < vocab_; ++i) index.emplace(vocabulary_[i], static_cast<std::uint32_t>(i));
    for (const std::string& ref : refs->texts) {
      TokenSequence seq;
      for (const std::string& word : tokenize_caption(ref)) {
        if (seq.tokens.size() == length_) break;
        if (auto it = index.find(word); it != index.end()) seq.tokens.push_back(it->second);
      }
      if (!seq.tokens.empty()) return seq;
    }
    throw InvalidArgument("no reference caption contains an in-vocabulary word");
  }
  throw InvalidArgument("toy-caption accepts token-sequence or reference-set targets");
}

LossAndGrad ToyCaptionModel::evaluate(std::span<const ImageTensor> inputs, std::string_view,
                                      const Target& target) const {
  const TokenSequence seq = resolve_tokens(target);
  const ImageTensor& x = inputs[0];
  const std::size_t d = shape_.numel();
  const std::size_t stride = vocab_ * d + vocab_;
  const double scale = 1.0 / static_cast<double>(seq.tokens.size());

  LossAndGrad out;
  out.grads.emplace_back(shape_);
  double total = 0.0;
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    const double* w = params_.data() + t * stride;
    const CrossEntropy ce = cross_entropy(affine(w, w + vocab_ * d, vocab_, x.data()), seq.tokens[t]);
    total += ce.loss;
    accumulate_transpose(w, ce.residual, scale, out.grads[0].data());
  }
  out.loss = total * scale;
  return out;
}

std::string ToyCaptionModel::generate(std::span<const ImageTensor> inputs, std::string_view) const {
  std::string caption;
  for (std::uint32_t tok : decode(inputs[0])) {
    if (!caption.empty()) caption += ' ';
    caption += vocabulary_[tok];
  }
  return caption;
}

std::vector<std::uint32_t> ToyCaptionModel::hyperparameters() const {
  return {static_cast<std::uint32_t>(length_), static_cast<std::uint32_t>(vocab_)};
}

std::vector<double> ToyCaptionModel::parameters() const { return params_; }

// ---------------------------------------------------------------------------
// Serialization

void save_toy_model(const ToyModel& model, const std::filesystem::path& path) {
  AdvtFile file;
  file.kind = model.kind();
  file.shapes = model.input_shapes();
  file.hyper = model.hyperparameters();
  const auto params = model.parameters();
  file.payload.assign(params.begin(), params.end());
  write_advt(file, path);
}

std::unique_ptr<ToyModel> toy_model_from_advt(const AdvtFile& file) {
  std::vector<double> p(file.payload.begin(), file.payload.end());
  auto need = [&](std::size_t slots, std::size_t hyper) {
    if (file.shapes.size() != slots || file.hyper.size() != hyper) {
      throw InvalidArgument("ADVT model header has the wrong slot or hyperparameter count");
    }
  };
  switch (file.kind) {
    case AdvtKind::kToyLinear: {
      need(1, 1);
      const std::size_t k = file.hyper[0];
      const std::size_t wsize = k * file.shapes[0].numel();
      if (p.size() < wsize) throw InvalidArgument("toy-linear payload too short");
      std::vector<double> w(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(wsize));
      std::vector<double> b(p.begin() + static_cast<std::ptrdiff_t>(wsize), p.end());
      return std::make_unique<ToyLinearModel>(file.shapes[0], k, std::move(w), std::move(b));
    }
    case AdvtKind::kToyMlp:
      need(1, 2);
      return std::make_unique<ToyMLPModel>(file.shapes[0], file.hyper[0], file.hyper[1], std::move(p));
    case AdvtKind::kToyTwoBranch:
      need(2, 1);
      return std::make_unique<ToyTwoBranchModel>(file.shapes[0], file.shapes[1], file.hyper[0],
                                                 std::move(p));
    case AdvtKind::kToyCaption:
      need(1, 2);
      return std::make_unique<ToyCaptionModel>(file.shapes[0], file.hyper[0], file.hyper[1],
                                               std::move(p));
    case AdvtKind::kTensor:
      break;
  }
  throw InvalidArgument("ADVT file holds a tensor, not a toy model");
}

std::unique_ptr<ToyModel> load_toy_model(const std::filesystem::path& path) {
  return toy_model_from_advt(read_advt(path));
}

}  // namespace advlm
