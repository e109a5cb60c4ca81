#include "advlm/protocol.hpp"

#include <cstdint>
#include <cstring>

#include <openssl/evp.h>

namespace advlm {

using nlohmann::json;

std::string_view protocol_error_name(ProtocolErrorCode code) {
  switch (code) {
    case ProtocolErrorCode::kBadJson: return "bad-json";
    case ProtocolErrorCode::kOversizeLine: return "oversize-line";
    case ProtocolErrorCode::kBadTensor: return "bad-tensor";
    case ProtocolErrorCode::kShapeMismatch: return "shape-mismatch";
    case ProtocolErrorCode::kMissingField: return "missing-field";
    case ProtocolErrorCode::kAmbiguousResponse: return "ambiguous-response";
    case ProtocolErrorCode::kUnknownOp: return "unknown-op";
    case ProtocolErrorCode::kBadTarget: return "bad-target";
    case ProtocolErrorCode::kIdMismatch: return "id-mismatch";
    case ProtocolErrorCode::kTimeout: return "timeout";
    case ProtocolErrorCode::kTransportClosed: return "transport-closed";
    case ProtocolErrorCode::kRemoteError: return "remote-error";
  }
  return "unknown";
}

std::string_view op_name(OracleOp op) {
  switch (op) {
    case OracleOp::kDescribe: return "describe";
    case OracleOp::kLossAndGrad: return "loss_and_grad";
    case OracleOp::kGenerate: return "generate";
    case OracleOp::kRewrite: return "rewrite";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(ProtocolErrorCode code, const std::string& message) {
  throw ProtocolError(code, message);
}

OracleOp parse_op(const std::string& name) {
  if (name == "describe") return OracleOp::kDescribe;
  if (name == "loss_and_grad") return OracleOp::kLossAndGrad;
  if (name == "generate") return OracleOp::kGenerate;
  if (name == "rewrite") return OracleOp::kRewrite;
  fail(ProtocolErrorCode::kUnknownOp, "unknown op '" + name + "'");
}

json parse_line(std::string_view line, const CodecLimits& limits) {
  if (line.size() > limits.max_line_bytes) {
    fail(ProtocolErrorCode::kOversizeLine, "line of " + std::to_string(line.size()) +
                                               " bytes exceeds the cap of " +
                                               std::to_string(limits.max_line_bytes));
  }
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  json j = json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) fail(ProtocolErrorCode::kBadJson, "not a JSON object");
  return j;
}

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) fail(ProtocolErrorCode::kMissingField, std::string("missing '") + name + "'");
  return *it;
}

std::string string_field(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) fail(ProtocolErrorCode::kMissingField, std::string("'") + name + "' must be a string");
  return v.get<std::string>();
}

std::vector<ImageTensor> tensor_list(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_array()) fail(ProtocolErrorCode::kMissingField, std::string("'") + name + "' must be an array");
  std::vector<ImageTensor> out;
  for (const json& t : v) out.push_back(decode_tensor(t));
  return out;
}

json shape_json(const Shape& s) { return json::array({s.channels, s.height, s.width}); }

Shape parse_shape(const json& v) {
  if (!v.is_array() || v.size() != 3) {
    fail(ProtocolErrorCode::kShapeMismatch, "shape must be [channels, height, width]");
  }
  std::size_t dims[3];
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number_integer() || v[i].get<std::int64_t>() < 1 || v[i].get<std::int64_t>() > (1 << 16)) {
      fail(ProtocolErrorCode::kShapeMismatch, "shape entries must be integers in [1, 65536]");
    }
    dims[i] = v[i].get<std::size_t>();
  }
  return Shape{dims[0], dims[1], dims[2]};
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) fail(ProtocolErrorCode::kBadTensor, "base64 length is not a multiple of 4");
  std::size_t pad = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool alpha = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                       c == '+' || c == '/';
    if (c == '=') {
      if (i + 2 < text.size()) fail(ProtocolErrorCode::kBadTensor, "misplaced base64 padding");
      ++pad;
    } else if (!alpha || pad > 0) {
      fail(ProtocolErrorCode::kBadTensor, "invalid base64 character");
    }
  }
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) fail(ProtocolErrorCode::kBadTensor, "invalid base64");
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

json encode_tensor(const ImageTensor& tensor) {
  std::vector<std::uint8_t> bytes(tensor.size() * sizeof(float));
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    const float f = static_cast<float>(tensor[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  return json{{"shape", shape_json(tensor.shape())}, {"dtype", "f32"}, {"data", base64_encode(bytes)}};
}

ImageTensor decode_tensor(const json& payload) {
  if (!payload.is_object()) fail(ProtocolErrorCode::kMissingField, "tensor payload must be an object");
  const Shape shape = parse_shape(field(payload, "shape"));
  if (string_field(payload, "dtype") != "f32") fail(ProtocolErrorCode::kBadTensor, "dtype must be f32");
  const std::vector<std::uint8_t> bytes = base64_decode(string_field(payload, "data"));
  if (bytes.size() != shape.numel() * sizeof(float)) {
    fail(ProtocolErrorCode::kShapeMismatch, "tensor data holds " + std::to_string(bytes.size()) +
                                                " bytes, shape " + shape.str() + " needs " +
                                                std::to_string(shape.numel() * sizeof(float)));
  }
  std::vector<double> data(shape.numel());
  for (std::size_t i = 0; i < data.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    data[i] = f;
  }
  return ImageTensor(shape, std::move(data));
}

json encode_target(const Target& target) {
  if (const auto* c = std::get_if<ClassIndex>(&target)) return json{{"class", c->value}};
  if (const auto* t = std::get_if<TokenSequence>(&target)) return json{{"tokens", t->tokens}};
  return json{{"references", std::get<ReferenceSet>(target).texts}};
}

Target decode_target(const json& payload) {
  if (!payload.is_object() || payload.size() != 1) {
    fail(ProtocolErrorCode::kBadTarget, "target must be an object with exactly one key");
  }
  if (auto it = payload.find("class"); it != payload.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0 || it->get<std::int64_t>() > UINT32_MAX) {
      fail(ProtocolErrorCode::kBadTarget, "class must be a non-negative integer");
    }
    return ClassIndex{it->get<std::uint32_t>()};
  }
  if (auto it = payload.find("tokens"); it != payload.end()) {
    TokenSequence seq;
    if (!it->is_array()) fail(ProtocolErrorCode::kBadTarget, "tokens must be an array");
    for (const json& v : *it) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > UINT32_MAX) {
        fail(ProtocolErrorCode::kBadTarget, "token ids must be non-negative integers");
      }
      seq.tokens.push_back(v.get<std::uint32_t>());
    }
    return seq;
  }
  if (auto it = payload.find("references"); it != payload.end()) {
    ReferenceSet refs;
    if (!it->is_array()) fail(ProtocolErrorCode::kBadTarget, "references must be an array");
    for (const json& v : *it) {
      if (!v.is_string()) fail(ProtocolErrorCode::kBadTarget, "references must be strings");
      refs.texts.push_back(v.get<std::string>());
    }
    return refs;
  }
  fail(ProtocolErrorCode::kBadTarget, "target key must be class, tokens or references");
}

std::string encode_request(const OracleRequest& request) {
  json j{{"id", request.id}, {"op", op_name(request.op)}};
  if (!request.inputs.empty()) {
    json inputs = json::array();
    for (const ImageTensor& t : request.inputs) inputs.push_back(encode_tensor(t));
    j["inputs"] = std::move(inputs);
  }
  if (!request.prompt.empty() || request.op != OracleOp::kDescribe) j["prompt"] = request.prompt;
  if (request.target) j["target"] = encode_target(*request.target);
  if (request.op == OracleOp::kRewrite) j["instruction"] = request.instruction;
  return j.dump() + "\n";
}

OracleRequest decode_request(std::string_view line, const CodecLimits& limits) {
  const json j = parse_line(line, limits);
  OracleRequest req;
  req.id = string_field(j, "id");
  req.op = parse_op(string_field(j, "op"));
  if (auto it = j.find("prompt"); it != j.end()) {
    if (!it->is_string()) fail(ProtocolErrorCode::kMissingField, "'prompt' must be a string");
    req.prompt = it->get<std::string>();
  }
  switch (req.op) {
    case OracleOp::kDescribe:
      break;
    case OracleOp::kLossAndGrad:
      req.inputs = tensor_list(j, "inputs");
      req.target = decode_target(field(j, "target"));
      break;
    case OracleOp::kGenerate:
      req.inputs = tensor_list(j, "inputs");
      break;
    case OracleOp::kRewrite:
      req.instruction = string_field(j, "instruction");
      break;
  }
  return req;
}

std::string encode_response(const OracleResponse& response) {
  json j{{"id", response.id}};
  std::visit(
      [&j](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, DescribeResult>) {
          j["protocol_version"] = body.protocol_version;
          j["model"] = body.model;
          json slots = json::array();
          for (const Shape& s : body.slots) slots.push_back(shape_json(s));
          j["slots"] = std::move(slots);
        } else if constexpr (std::is_same_v<T, GradResult>) {
          j["loss"] = body.loss;
          json grads = json::array();
          for (const ImageTensor& g : body.grads) grads.push_back(encode_tensor(g));
          j["grads"] = std::move(grads);
        } else if constexpr (std::is_same_v<T, TextResult>) {
          j["text"] = body.text;
        } else {
          j["error"] = json{{"code", body.code}, {"message", body.message}};
        }
      },
      response.body);
  return j.dump() + "\n";
}

OracleResponse decode_response(std::string_view line, const CodecLimits& limits) {
  const json j = parse_line(line, limits);
  OracleResponse resp;
  resp.id = string_field(j, "id");
  const bool has_error = j.contains("error");
  const bool has_grad = j.contains("loss") || j.contains("grads");
  const bool has_text = j.contains("text");
  const bool has_describe = j.contains("slots");
  const int kinds = int{has_error} + int{has_grad} + int{has_text} + int{has_describe};
  if (kinds != 1) {
    fail(ProtocolErrorCode::kAmbiguousResponse,
         kinds == 0 ? "response carries neither a result nor an error"
                    : "response carries more than one of result/error");
  }
  if (has_error) {
    const json& e = field(j, "error");
    if (!e.is_object()) fail(ProtocolErrorCode::kMissingField, "'error' must be an object");
    resp.body = ErrorResult{string_field(e, "code"), string_field(e, "message")};
  } else if (has_grad) {
    const json& loss = field(j, "loss");
    if (!loss.is_number()) fail(ProtocolErrorCode::kMissingField, "'loss' must be a number");
    resp.body = GradResult{loss.get<double>(), tensor_list(j, "grads")};
  } else if (has_text) {
    resp.body = TextResult{string_field(j, "text")};
  } else {
    DescribeResult d;
    const json& version = field(j, "protocol_version");
    if (!version.is_number_integer()) fail(ProtocolErrorCode::kMissingField, "'protocol_version' must be an integer");
    d.protocol_version = version.get<int>();
    d.model = string_field(j, "model");
    const json& slots = field(j, "slots");
    if (!slots.is_array()) fail(ProtocolErrorCode::kMissingField, "'slots' must be an array");
    for (const json& s : slots) d.slots.push_back(parse_shape(s));
    resp.body = std::move(d);
  }
  return resp;
}

}  // namespace advlm
