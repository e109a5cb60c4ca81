#include "advlm/protocol_check.hpp"

#include <algorithm>
#include <cmath>

#include "advlm/attacks.hpp"
#include "advlm/remote_model.hpp"
#include "advlm/rng.hpp"
#include "advlm/toy_models.hpp"

namespace advlm {

using nlohmann::json;

bool ProtocolCheckReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

// Lets a RemoteModel drive a transport owned by the caller.
class BorrowedTransport : public Transport {
 public:
  explicit BorrowedTransport(Transport& inner) : inner_(inner) {}
  void send_line(std::string_view line, double timeout) override { inner_.send_line(line, timeout); }
  std::string read_line(double timeout, std::size_t max_bytes) override {
    return inner_.read_line(timeout, max_bytes);
  }
  std::string describe() const override { return inner_.describe(); }

 private:
  Transport& inner_;
};

json tensor_json(const Shape& shape, std::uint64_t seed) {
  return encode_tensor(random_tensor(shape, seed));
}

json shape_json(const Shape& s) { return json::array({s.channels, s.height, s.width}); }

std::string random_printable(SplitMix64& rng, std::size_t length) {
  std::string s;
  for (std::size_t i = 0; i < length; ++i) s += static_cast<char>(' ' + rng.bounded(95));
  return s;
}

// Rounds through f32 so the values cross the wire unchanged.
ImageTensor wire_exact(ImageTensor t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

Target twin_target(const DifferentiableModel& twin, std::size_t fixture) {
  if (const auto* cap = dynamic_cast<const ToyCaptionModel*>(&twin)) {
    TokenSequence seq;
    const std::size_t vocab = cap->vocabulary().size();
    for (std::size_t k = 0; k < std::min<std::size_t>(cap->length(), 3); ++k) {
      seq.tokens.push_back(static_cast<std::uint32_t>((fixture + k) % vocab));
    }
    return seq;
  }
  if (const auto* toy = dynamic_cast<const ToyModel*>(&twin)) {
    return ClassIndex{static_cast<std::uint32_t>(fixture % toy->vocabulary().size())};
  }
  return ClassIndex{0};
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

std::vector<std::string> malformed_requests(std::size_t count, std::uint64_t seed, const std::vector<Shape>& slots) {
  SplitMix64 rng(seed);
  std::vector<std::string> out;
  const Shape shape = slots.empty() ? Shape{1, 2, 2} : slots.front();
  auto valid_inputs = [&](std::uint64_t s) {
    json inputs = json::array();
    for (std::size_t k = 0; k < std::max<std::size_t>(slots.size(), 1); ++k) {
      inputs.push_back(tensor_json(slots.empty() ? shape : slots[k], s + k));
    }
    return inputs;
  };
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = "fuzz-" + std::to_string(i);
    const std::uint64_t s = rng.next();
    json j;
    switch (i % 14) {
      case 0: {  // truncated JSON
        std::string full = json{{"id", id}, {"op", "loss_and_grad"}, {"inputs", valid_inputs(s)}}.dump();
        out.push_back(full.substr(0, 1 + rng.bounded(full.size() - 1)));
        continue;
      }
      case 1:
        out.push_back("~" + random_printable(rng, 1 + rng.bounded(80)));
        continue;
      case 2:
        out.push_back(json::array({i, id, nullptr}).dump());
        continue;
      case 3:
        j = {{"junk", s}};
        break;
      case 4:
        j = {{"id", id}, {"op", "op-" + std::to_string(rng.bounded(1000))}};
        break;
      case 5: {
        json t = tensor_json(shape, s);
        t["data"] = "!!" + random_printable(rng, 6) + "@@";
        j = {{"id", id}, {"op", "loss_and_grad"}, {"inputs", {t}}, {"target", {{"class", 0}}}};
        break;
      }
      case 6: {
        json t = tensor_json(shape, s);
        t["shape"] = shape_json(Shape{shape.channels + 1 + rng.bounded(3), shape.height, shape.width});
        j = {{"id", id}, {"op", "loss_and_grad"}, {"inputs", {t}}, {"target", {{"class", 0}}}};
        break;
      }
      case 7: {
        json t = tensor_json(shape, s);
        t["dtype"] = rng.bounded(2) ? "f64" : "u8";
        j = {{"id", id}, {"op", "generate"}, {"inputs", {t}}, {"prompt", ""}};
        break;
      }
      case 8:
        j = {{"id", id}, {"op", "loss_and_grad"}, {"inputs", valid_inputs(s)},
             {"target", rng.bounded(2) ? json{{"label", 3}} : json{{"class", -1}}}};
        break;
      case 9:
        j = {{"id", id}, {"op", "loss_and_grad"}, {"target", {{"class", 0}}}};
        break;
      case 10:
        j = {{"id", static_cast<std::int64_t>(i)}, {"op", "describe"}};
        break;
      case 11: {
        json t = tensor_json(shape, s);
        t["shape"] = json::array({0, -1, 2});
        j = {{"id", id}, {"op", "generate"}, {"inputs", {t}}, {"prompt", ""}};
        break;
      }
      case 12:
        j = {{"id", id}, {"op", "generate"}, {"inputs", valid_inputs(s)}, {"prompt", 17}};
        break;
      default: {  // one input too many
        json inputs = valid_inputs(s);
        inputs.push_back(tensor_json(shape, s + 99));
        j = {{"id", id}, {"op", "loss_and_grad"}, {"inputs", inputs}, {"target", {{"class", 0}}}};
        break;
      }
    }
    out.push_back(j.dump());
  }
  return out;
}

ProtocolCheckReport protocol_check(Transport& transport, const ProtocolCheckOptions& options) {
  ProtocolCheckReport report;
  const double timeout = options.timeout_seconds;
  auto exchange = [&](const std::string& line) {
    transport.send_line(line.back() == '\n' ? line : line + "\n", timeout);
    return decode_response(transport.read_line(timeout, kDefaultMaxLineBytes));
  };

  // Handshake.
  DescribeResult described;
  {
    CheckResult c{"handshake", false, ""};
    try {
      OracleRequest req;
      req.id = "check-describe";
      const OracleResponse resp = exchange(encode_request(req));
      if (const auto* d = std::get_if<DescribeResult>(&resp.body)) {
        described = *d;
        if (resp.id != req.id) {
          c.detail = "response id '" + resp.id + "' does not echo the request";
        } else if (d->protocol_version != kProtocolVersion) {
          c.detail = "peer speaks protocol version " + std::to_string(d->protocol_version);
        } else if (d->slots.empty()) {
          c.detail = "peer reports no input slots";
        } else {
          c.passed = true;
          c.detail = d->model + ", " + std::to_string(d->slots.size()) + " slot(s)";
        }
      } else {
        c.detail = "describe was not answered with a description";
      }
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    report.checks.push_back(c);
    if (!c.passed) return report;
  }

  // Fuzzing.
  {
    CheckResult c{"fuzz", false, ""};
    const auto lines = malformed_requests(options.fuzz_lines, options.seed, described.slots);
    std::size_t answered = 0;
    std::string first_problem;
    try {
      for (std::size_t i = 0; i < lines.size(); ++i) {
        const OracleResponse resp = exchange(lines[i]);
        if (std::holds_alternative<ErrorResult>(resp.body)) {
          ++answered;
        } else if (first_problem.empty()) {
          first_problem = "line " + std::to_string(i) + " was answered without an error";
        }
      }
    } catch (const std::exception& e) {
      first_problem = std::string("connection lost after ") + std::to_string(answered) + " lines: " + e.what();
    }
    c.passed = answered == lines.size();
    c.detail = std::to_string(answered) + "/" + std::to_string(lines.size()) + " malformed lines answered with errors";
    if (!first_problem.empty()) c.detail += "; " + first_problem;
    report.checks.push_back(c);
  }

  // Liveness after fuzzing.
  {
    CheckResult c{"alive-after-fuzz", false, ""};
    try {
      OracleRequest req;
      req.id = "check-alive";
      req.op = OracleOp::kLossAndGrad;
      for (std::size_t s = 0; s < described.slots.size(); ++s) {
        req.inputs.push_back(random_tensor(described.slots[s], mix_seed(options.seed, s)));
      }
      req.target = options.twin ? twin_target(*options.twin, 0) : Target{ClassIndex{0}};
      const OracleResponse resp = exchange(encode_request(req));
      if (resp.id != req.id) {
        c.detail = "response id mismatch";
      } else if (const auto* g = std::get_if<GradResult>(&resp.body)) {
        bool shapes_ok = g->grads.size() == described.slots.size();
        for (std::size_t s = 0; shapes_ok && s < g->grads.size(); ++s) {
          shapes_ok = g->grads[s].shape() == described.slots[s];
        }
        c.passed = shapes_ok;
        c.detail = shapes_ok ? "loss_and_grad answered" : "gradient shapes do not mirror the inputs";
      } else if (const auto* e = std::get_if<ErrorResult>(&resp.body)) {
        // An error is still an answer unless a twin fixes what the peer must accept.
        c.passed = options.twin == nullptr;
        c.detail = "answered with error " + e->code;
      } else {
        c.detail = "loss_and_grad answered with the wrong result kind";
      }
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    report.checks.push_back(c);
  }

  if (options.twin == nullptr) return report;
  const DifferentiableModel& twin = *options.twin;

  {
    CheckResult c{"twin-describe", described.slots == twin.input_shapes(), ""};
    c.detail = c.passed ? "slot shapes match" : "peer slot shapes differ from the twin";
    report.checks.push_back(c);
    if (!c.passed) return report;
  }

  {
    CheckResult c{"twin-loss-grad", true, ""};
    double worst_loss = 0.0;
    double worst_grad = 0.0;
    try {
      for (std::size_t f = 0; f < options.twin_fixtures; ++f) {
        OracleRequest req;
        req.id = "check-twin-" + std::to_string(f);
        req.op = OracleOp::kLossAndGrad;
        for (std::size_t s = 0; s < described.slots.size(); ++s) {
          req.inputs.push_back(wire_exact(random_tensor(described.slots[s], mix_seed(options.seed + 1000 + f, s))));
        }
        req.target = twin_target(twin, f);
        const OracleResponse resp = exchange(encode_request(req));
        const auto* g = std::get_if<GradResult>(&resp.body);
        if (g == nullptr || g->grads.size() != req.inputs.size()) {
          c.passed = false;
          c.detail = "fixture " + std::to_string(f) + " not answered with a gradient";
          break;
        }
        const LossAndGrad local = loss_and_grad(twin, req.inputs, req.prompt, *req.target);
        worst_loss = std::max(worst_loss, std::abs(g->loss - local.loss));
        if (!close(g->loss, local.loss, options.tolerance)) c.passed = false;
        for (std::size_t s = 0; s < local.grads.size(); ++s) {
          if (g->grads[s].shape() != local.grads[s].shape()) {
            c.passed = false;
            continue;
          }
          for (std::size_t k = 0; k < local.grads[s].size(); ++k) {
            worst_grad = std::max(worst_grad, std::abs(g->grads[s][k] - local.grads[s][k]));
            if (!close(g->grads[s][k], local.grads[s][k], options.tolerance)) c.passed = false;
          }
        }
      }
    } catch (const std::exception& e) {
      c.passed = false;
      c.detail = e.what();
    }
    if (c.detail.empty()) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%zu fixtures, max |loss diff| %.3g, max |grad diff| %.3g",
                    options.twin_fixtures, worst_loss, worst_grad);
      c.detail = buf;
    }
    report.checks.push_back(c);
  }

  for (AttackMethod method : {AttackMethod::kFgsm, AttackMethod::kPgd}) {
    CheckResult c{std::string("twin-") + (method == AttackMethod::kFgsm ? "fgsm" : "pgd") + "-trajectory", false, ""};
    try {
      RemoteModel remote(std::make_unique<BorrowedTransport>(transport), RemoteOptions{timeout});
      Sample sample;
      sample.id = "trajectory";
      for (std::size_t s = 0; s < described.slots.size(); ++s) {
        sample.inputs.push_back(wire_exact(random_tensor(described.slots[s], mix_seed(options.seed + 77, s), 0.1, 0.9)));
      }
      sample.target = twin_target(twin, 1);
      AttackConfig cfg;
      cfg.method = method;
      cfg.epsilon = 8.0 / 255.0;
      cfg.iterations = method == AttackMethod::kFgsm ? 1 : options.trajectory_iterations;
      cfg.input_mask = AttackConfig::all_slots(described.slots.size());
      const AttackResult wire = attack(remote, sample, cfg);
      const AttackResult local = attack(twin, sample, cfg);
      double worst = 0.0;
      bool ok = wire.loss_trace.size() == local.loss_trace.size();
      for (std::size_t k = 0; ok && k < local.loss_trace.size(); ++k) {
        worst = std::max(worst, std::abs(wire.loss_trace[k] - local.loss_trace[k]));
        ok = close(wire.loss_trace[k], local.loss_trace[k], options.tolerance);
      }
      c.passed = ok;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%zu steps, max |loss diff| %.3g", local.loss_trace.size(), worst);
      c.detail = buf;
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    report.checks.push_back(c);
  }
  return report;
}

}  // namespace advlm
