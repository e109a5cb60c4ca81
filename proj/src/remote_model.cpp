#include "advlm/remote_model.hpp"

#include "advlm/error.hpp"

namespace advlm {

RemoteModel::RemoteModel(std::unique_ptr<Transport> transport, RemoteOptions options)
    : transport_(std::move(transport)), options_(options) {
  OracleRequest req;
  req.op = OracleOp::kDescribe;
  OracleResponse resp;
  try {
    resp = exchange(std::move(req));
  } catch (const Error& e) {
    throw ModelError("oracle handshake with " + transport_->describe() + " failed: " + e.what());
  }
  const auto* d = std::get_if<DescribeResult>(&resp.body);
  if (d == nullptr) throw ModelError("oracle handshake: describe answered with the wrong kind");
  if (d->protocol_version != kProtocolVersion) {
    throw ModelError("oracle speaks protocol version " + std::to_string(d->protocol_version) +
                     ", expected " + std::to_string(kProtocolVersion));
  }
  if (d->slots.empty()) throw ModelError("oracle reports zero input slots");
  described_ = *d;
}

OracleResponse RemoteModel::exchange(OracleRequest request) const {
  std::lock_guard<std::mutex> lock(mu_);
  request.id = "r" + std::to_string(next_id_++);
  transport_->send_line(encode_request(request), options_.timeout_seconds);
  const std::string line = transport_->read_line(options_.timeout_seconds, options_.max_line_bytes);
  OracleResponse resp = decode_response(line, CodecLimits{options_.max_line_bytes});
  if (resp.id != request.id) {
    throw ProtocolError(ProtocolErrorCode::kIdMismatch,
                        "expected response id " + request.id + ", got " + resp.id);
  }
  if (const auto* err = std::get_if<ErrorResult>(&resp.body)) {
    throw ProtocolError(ProtocolErrorCode::kRemoteError, err->code + ": " + err->message);
  }
  return resp;
}

LossAndGrad RemoteModel::evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                                  const Target& target) const {
  OracleRequest req;
  req.op = OracleOp::kLossAndGrad;
  req.inputs.assign(inputs.begin(), inputs.end());
  req.prompt = std::string(prompt);
  req.target = target;
  OracleResponse resp = exchange(std::move(req));
  auto* g = std::get_if<GradResult>(&resp.body);
  if (g == nullptr) {
    throw ProtocolError(ProtocolErrorCode::kAmbiguousResponse, "loss_and_grad answered without a gradient");
  }
  return LossAndGrad{g->loss, std::move(g->grads)};
}

std::string RemoteModel::generate(std::span<const ImageTensor> inputs, std::string_view prompt) const {
  OracleRequest req;
  req.op = OracleOp::kGenerate;
  req.inputs.assign(inputs.begin(), inputs.end());
  req.prompt = std::string(prompt);
  OracleResponse resp = exchange(std::move(req));
  auto* t = std::get_if<TextResult>(&resp.body);
  if (t == nullptr) {
    throw ProtocolError(ProtocolErrorCode::kAmbiguousResponse, "generate answered without text");
  }
  return std::move(t->text);
}

}  // namespace advlm
