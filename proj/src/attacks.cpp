#include "advlm/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "advlm/error.hpp"
#include "advlm/rng.hpp"

namespace advlm {

std::string_view method_name(AttackMethod method) {
  switch (method) {
    case AttackMethod::kFgsm: return "FGSM";
    case AttackMethod::kPgd: return "PGD";
    case AttackMethod::kApgd: return "APGD";
  }
  return "?";
}

AttackMethod parse_method(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "FGSM") return AttackMethod::kFgsm;
  if (upper == "PGD") return AttackMethod::kPgd;
  if (upper == "APGD") return AttackMethod::kApgd;
  throw InvalidArgument("unknown attack method '" + std::string(name) + "'");
}

std::set<std::size_t> AttackConfig::all_slots(std::size_t slot_count) {
  std::set<std::size_t> slots;
  for (std::size_t i = 0; i < slot_count; ++i) slots.insert(i);
  return slots;
}

void AttackConfig::validate(std::size_t slot_count) const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidArgument("epsilon must be positive and finite");
  }
  if (input_mask.empty()) throw InvalidArgument("input mask must name at least one slot");
  if (*input_mask.rbegin() >= slot_count) {
    throw InvalidArgument("input mask slot " + std::to_string(*input_mask.rbegin()) +
                          " out of range for a " + std::to_string(slot_count) + "-slot model");
  }
  if (step_size && !(*step_size > 0.0 && std::isfinite(*step_size))) {
    throw InvalidArgument("step size must be positive and finite");
  }
  if (method == AttackMethod::kPgd && iterations < 1) {
    throw InvalidArgument("PGD needs at least 1 iteration");
  }
  if (method == AttackMethod::kApgd && iterations < 2) {
    throw InvalidArgument("APGD needs at least 2 iterations");
  }
}

AttackConfig AttackConfig::normalized() const {
  AttackConfig c = *this;
  if (c.method == AttackMethod::kFgsm) c.iterations = 1;
  return c;
}

double AttackConfig::effective_step() const {
  switch (method) {
    case AttackMethod::kFgsm: return epsilon;
    case AttackMethod::kPgd: return step_size.value_or(epsilon / 4.0);
    case AttackMethod::kApgd: return step_size.value_or(2.0 * epsilon);
  }
  return epsilon;
}

ImageTensor project_linf(const ImageTensor& candidate, const ImageTensor& origin, double epsilon) {
  if (candidate.shape() != origin.shape() || candidate.size() != origin.size()) {
    throw InvalidArgument("project_linf: shape mismatch " + candidate.shape().str() + " vs " +
                          origin.shape().str());
  }
  ImageTensor out = candidate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = std::max(0.0, origin[i] - epsilon);
    const double hi = std::min(1.0, origin[i] + epsilon);
    const double c = out[i];
    out[i] = c < lo ? lo : (c > hi ? hi : c);
  }
  return out;
}

std::vector<int> apgd_checkpoints(int iterations) {
  if (iterations < 1) throw InvalidArgument("APGD checkpoints need a positive budget");
  // p_j in exact hundredths.
  std::vector<long> p = {0, 22};
  for (;;) {
    const long prev = p[p.size() - 2], cur = p.back();
    const long next = cur + std::max(cur - prev - 3, 6L);
    if (next > 100) break;
    p.push_back(next);
  }
  std::vector<int> w;
  for (long pj : p) {
    const int wj = static_cast<int>((pj * iterations + 99) / 100);
    if (w.empty() || wj != w.back()) w.push_back(wj);
  }
  return w;
}

namespace {

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// Shared bookkeeping: loss trace, best-so-far iterate and its gradient.
class AttackRun {
 public:
  AttackRun(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config)
      : model_(model), sample_(sample), config_(config),
        masked_(sample.inputs.size(), false) {
    for (std::size_t s : config.input_mask) masked_[s] = true;
  }

  const std::vector<ImageTensor>& origin() const { return sample_.inputs; }
  bool masked(std::size_t slot) const { return masked_[slot]; }
  double epsilon() const { return config_.epsilon; }

  // Evaluates `x`, appends to the trace and updates the best iterate.
  LossAndGrad evaluate(const std::vector<ImageTensor>& x) {
    LossAndGrad lg = loss_and_grad(model_, x, sample_.prompt, sample_.target);
    trace_.push_back(lg.loss);
    if (trace_.size() == 1 || lg.loss > best_loss_) {
      best_loss_ = lg.loss;
      best_inputs_ = x;
      best_grads_ = lg.grads;
      best_iteration_ = trace_.size() - 1;
    }
    return lg;
  }

  // x + step * sign(grad) on masked slots, projected onto the feasible set.
  std::vector<ImageTensor> signed_step(const std::vector<ImageTensor>& x,
                                       const std::vector<ImageTensor>& grads, double step) const {
    std::vector<ImageTensor> out = x;
    for (std::size_t s = 0; s < out.size(); ++s) {
      if (!masked_[s]) continue;
      for (std::size_t i = 0; i < out[s].size(); ++i) out[s][i] += step * sign(grads[s][i]);
      out[s] = project_linf(out[s], origin()[s], config_.epsilon);
    }
    return out;
  }

  std::vector<ImageTensor> random_start() const {
    SplitMix64 rng(config_.seed);
    std::vector<ImageTensor> out = origin();
    for (std::size_t s = 0; s < out.size(); ++s) {
      if (!masked_[s]) continue;
      for (std::size_t i = 0; i < out[s].size(); ++i) {
        out[s][i] += rng.uniform(-config_.epsilon, config_.epsilon);
      }
      out[s] = project_linf(out[s], origin()[s], config_.epsilon);
    }
    return out;
  }

  // Clean evaluation plus the optional random start; returns the start point.
  std::pair<std::vector<ImageTensor>, LossAndGrad> start() {
    LossAndGrad clean = evaluate(origin());
    if (!config_.random_start) return {origin(), std::move(clean)};
    auto x = random_start();
    auto lg = evaluate(x);
    return {std::move(x), std::move(lg)};
  }

  double best_loss() const { return best_loss_; }
  const std::vector<ImageTensor>& best_inputs() const { return best_inputs_; }
  const std::vector<ImageTensor>& best_grads() const { return best_grads_; }

  AttackResult finish(int iterations_used) && {
    AttackResult r;
    r.adversarial_inputs = std::move(best_inputs_);
    r.delta_inf_norm.assign(r.adversarial_inputs.size(), 0.0);
    for (std::size_t s = 0; s < r.adversarial_inputs.size(); ++s) {
      if (masked_[s]) r.delta_inf_norm[s] = r.adversarial_inputs[s].max_abs_diff(origin()[s]);
    }
    r.loss_trace = std::move(trace_);
    r.best_loss = best_loss_;
    r.best_iteration = best_iteration_;
    r.iterations_used = iterations_used;
    return r;
  }

 private:
  const DifferentiableModel& model_;
  const Sample& sample_;
  const AttackConfig& config_;
  std::vector<bool> masked_;
  std::vector<double> trace_;
  double best_loss_ = 0.0;
  std::vector<ImageTensor> best_inputs_;
  std::vector<ImageTensor> best_grads_;
  std::size_t best_iteration_ = 0;
};

void require_method(const AttackConfig& config, AttackMethod expected, const Sample& sample) {
  if (config.method != expected) {
    throw InvalidArgument(std::string(method_name(expected)) + " called with a " +
                          std::string(method_name(config.method)) + " config");
  }
  config.validate(sample.inputs.size());
}

}  // namespace

AttackResult fgsm(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config) {
  require_method(config, AttackMethod::kFgsm, sample);
  const AttackConfig cfg = config.normalized();
  AttackRun run(model, sample, cfg);
  auto [x, lg] = run.start();
  run.evaluate(run.signed_step(x, lg.grads, cfg.epsilon));
  return std::move(run).finish(1);
}

AttackResult pgd(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config) {
  require_method(config, AttackMethod::kPgd, sample);
  AttackRun run(model, sample, config);
  const double step = config.effective_step();
  auto [x, lg] = run.start();
  for (int k = 0; k < config.iterations; ++k) {
    x = run.signed_step(x, lg.grads, step);
    lg = run.evaluate(x);
  }
  return std::move(run).finish(config.iterations);
}

AttackResult apgd(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config) {
  require_method(config, AttackMethod::kApgd, sample);
  AttackRun run(model, sample, config);
  const std::vector<int> checkpoints = apgd_checkpoints(config.iterations);

  auto [x, lg] = run.start();
  std::vector<ImageTensor> x_prev = x;
  std::vector<ImageTensor> grads = std::move(lg.grads);
  double loss = lg.loss;

  double step = config.effective_step();
  std::size_t next_checkpoint = 1;
  int improved = 0;
  double step_at_last_checkpoint = step;
  double best_at_last_checkpoint = run.best_loss();

  for (int k = 0; k < config.iterations; ++k) {
    std::vector<ImageTensor> z = run.signed_step(x, grads, step);
    std::vector<ImageTensor> next = z;
    if (k > 0) {
      for (std::size_t s = 0; s < next.size(); ++s) {
        if (!run.masked(s)) continue;
        for (std::size_t i = 0; i < next[s].size(); ++i) {
          next[s][i] = x[s][i] + kApgdMomentum * (z[s][i] - x[s][i]) +
                       (1.0 - kApgdMomentum) * (x[s][i] - x_prev[s][i]);
        }
        next[s] = project_linf(next[s], run.origin()[s], run.epsilon());
      }
    }
    LossAndGrad nlg = run.evaluate(next);
    if (nlg.loss > loss) ++improved;
    x_prev = std::move(x);
    x = std::move(next);
    grads = std::move(nlg.grads);
    loss = nlg.loss;

    if (next_checkpoint < checkpoints.size() && k + 1 == checkpoints[next_checkpoint]) {
      const int span = checkpoints[next_checkpoint] - checkpoints[next_checkpoint - 1];
      const bool too_few_improvements = improved < kApgdRho * span;
      const bool stagnated =
          step_at_last_checkpoint == step && best_at_last_checkpoint == run.best_loss();
      step_at_last_checkpoint = step;
      best_at_last_checkpoint = run.best_loss();
      if (too_few_improvements || stagnated) {
        step /= 2.0;
        x = run.best_inputs();
        x_prev = x;
        grads = run.best_grads();
        loss = run.best_loss();
      }
      improved = 0;
      ++next_checkpoint;
    }
  }
  return std::move(run).finish(config.iterations);
}

AttackResult attack(const DifferentiableModel& model, const Sample& sample, const AttackConfig& config) {
  config.validate(model.slot_count());
  switch (config.method) {
    case AttackMethod::kFgsm: return fgsm(model, sample, config);
    case AttackMethod::kPgd: return pgd(model, sample, config);
    case AttackMethod::kApgd: return apgd(model, sample, config);
  }
  throw InvalidArgument("unknown attack method");
}

}  // namespace advlm
