#include "advlm/oracle_server.hpp"

#include <cerrno>
#include <unistd.h>

#include "advlm/error.hpp"

namespace advlm {

using nlohmann::json;

OracleServer::OracleServer(const DifferentiableModel& model, RewriterClient* rewriter, CodecLimits limits)
    : model_(model), rewriter_(rewriter), limits_(limits) {}

namespace {

std::string error_line(std::string id, std::string_view code, const std::string& message) {
  return encode_response({std::move(id), ErrorResult{std::string(code), message}});
}

// Best-effort id of a request that failed to decode.
std::string salvage_id(std::string_view line) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_object()) {
    auto it = j.find("id");
    if (it != j.end() && it->is_string()) return it->get<std::string>();
  }
  return "";
}

void check_slots(const DifferentiableModel& model, const std::vector<ImageTensor>& inputs) {
  const auto shapes = model.input_shapes();
  if (inputs.size() != shapes.size()) {
    throw ProtocolError(ProtocolErrorCode::kShapeMismatch, "model has " + std::to_string(shapes.size()) +
                                                               " slots, request carries " +
                                                               std::to_string(inputs.size()) + " inputs");
  }
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    if (inputs[s].shape() != shapes[s]) {
      throw ProtocolError(ProtocolErrorCode::kShapeMismatch,
                          "slot " + std::to_string(s) + " expects " + shapes[s].str() + ", got " +
                              inputs[s].shape().str());
    }
  }
}

}  // namespace

std::string OracleServer::handle(std::string_view line) const {
  OracleRequest req;
  try {
    req = decode_request(line, limits_);
  } catch (const ProtocolError& e) {
    return error_line(salvage_id(line), protocol_error_name(e.code()), e.what());
  }
  try {
    switch (req.op) {
      case OracleOp::kDescribe:
        return encode_response({req.id, DescribeResult{kProtocolVersion, model_.id(), model_.input_shapes()}});
      case OracleOp::kLossAndGrad: {
        check_slots(model_, req.inputs);
        LossAndGrad lg = loss_and_grad(model_, req.inputs, req.prompt, *req.target);
        return encode_response({req.id, GradResult{lg.loss, std::move(lg.grads)}});
      }
      case OracleOp::kGenerate:
        check_slots(model_, req.inputs);
        for (const auto& x : req.inputs) x.require_unit_range("input");
        return encode_response({req.id, TextResult{model_.generate(req.inputs, req.prompt)}});
      case OracleOp::kRewrite:
        if (rewriter_ == nullptr) {
          return error_line(req.id, protocol_error_name(ProtocolErrorCode::kUnknownOp),
                            "this peer does not serve rewrite");
        }
        return encode_response({req.id, TextResult{rewriter_->rewrite(req.instruction, req.prompt)}});
    }
  } catch (const ProtocolError& e) {
    return error_line(req.id, protocol_error_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_line(req.id, kModelErrorCode, e.what());
  }
  return error_line(req.id, kModelErrorCode, "unhandled op");
}

void OracleServer::serve(int in_fd, int out_fd) const {
  auto write_all = [out_fd](const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
      const ssize_t n = ::write(out_fd, s.data() + off, s.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  };

  std::string buffer;
  bool discarding = false;  // inside an oversize line
  char chunk[65536];
  for (;;) {
    const ssize_t n = ::read(in_fd, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (std::size_t nl = buffer.find('\n', start); nl != std::string::npos; nl = buffer.find('\n', start)) {
      std::string_view line(buffer.data() + start, nl - start);
      start = nl + 1;
      if (discarding) {
        discarding = false;
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      if (!write_all(handle(line))) return;
    }
    buffer.erase(0, start);
    if (!discarding && buffer.size() > limits_.max_line_bytes) {
      discarding = true;
      buffer.clear();
      if (!write_all(error_line("", protocol_error_name(ProtocolErrorCode::kOversizeLine),
                                "request line exceeds " + std::to_string(limits_.max_line_bytes) + " bytes"))) {
        return;
      }
    } else if (discarding) {
      buffer.clear();
    }
  }
}

}  // namespace advlm
