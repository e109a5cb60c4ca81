#ifndef ADVLM_PROTOCOL_HPP_
#define ADVLM_PROTOCOL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "advlm/error.hpp"
#include "advlm/target.hpp"
#include "advlm/tensor.hpp"

namespace advlm {

// Engine side of the gradient-oracle wire protocol (docs/protocol.md):
// one UTF-8 JSON object per line, tensors as base64 little-endian f32.

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kDefaultMaxLineBytes = std::size_t{64} << 20;

enum class ProtocolErrorCode {
  kBadJson,            // line is not a JSON object
  kOversizeLine,       // line longer than the configured cap
  kBadTensor,          // invalid base64 or dtype
  kShapeMismatch,      // decoded byte count != 4 * prod(shape), or bad shape
  kMissingField,       // required field absent or of the wrong type
  kAmbiguousResponse,  // response carries both a result and an error, or none
  kUnknownOp,          // op not in {describe, loss_and_grad, generate, rewrite}
  kBadTarget,          // target encoding not recognized
  kIdMismatch,         // response id differs from the request id
  kTimeout,            // no complete line within the deadline
  kTransportClosed,    // peer closed the stream or the process died
  kRemoteError,        // peer answered with an error object
};

std::string_view protocol_error_name(ProtocolErrorCode code);

class ProtocolError : public Error {
 public:
  ProtocolError(ProtocolErrorCode code, const std::string& message)
      : Error(std::string(protocol_error_name(code)) + ": " + message), code_(code) {}
  ProtocolErrorCode code() const { return code_; }

 private:
  ProtocolErrorCode code_;
};

enum class OracleOp { kDescribe, kLossAndGrad, kGenerate, kRewrite };

std::string_view op_name(OracleOp op);

struct OracleRequest {
  std::string id;
  OracleOp op = OracleOp::kDescribe;
  std::vector<ImageTensor> inputs;
  std::string prompt;
  std::optional<Target> target;
  std::string instruction;  // rewrite only
};

struct DescribeResult {
  int protocol_version = kProtocolVersion;
  std::string model;
  std::vector<Shape> slots;
};

struct GradResult {
  double loss = 0.0;
  std::vector<ImageTensor> grads;
};

struct TextResult {
  std::string text;
};

struct ErrorResult {
  std::string code;
  std::string message;
};

struct OracleResponse {
  std::string id;
  std::variant<DescribeResult, GradResult, TextResult, ErrorResult> body;
};

struct CodecLimits {
  std::size_t max_line_bytes = kDefaultMaxLineBytes;
};

// Encoders return one line including the trailing '\n'.
std::string encode_request(const OracleRequest& request);
OracleRequest decode_request(std::string_view line, const CodecLimits& limits = {});
std::string encode_response(const OracleResponse& response);
OracleResponse decode_response(std::string_view line, const CodecLimits& limits = {});

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Strict RFC 4648 alphabet with padding; throws ProtocolError(kBadTensor).
std::vector<std::uint8_t> base64_decode(std::string_view text);

nlohmann::json encode_tensor(const ImageTensor& tensor);
ImageTensor decode_tensor(const nlohmann::json& payload);
nlohmann::json encode_target(const Target& target);
Target decode_target(const nlohmann::json& payload);

}  // namespace advlm

#endif  // ADVLM_PROTOCOL_HPP_
