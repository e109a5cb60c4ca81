#ifndef ADVLM_ORACLE_SERVER_HPP_
#define ADVLM_ORACLE_SERVER_HPP_

#include <string>
#include <string_view>

#include "advlm/model.hpp"
#include "advlm/prompts.hpp"
#include "advlm/protocol.hpp"

namespace advlm {

/// Model side of the oracle protocol for an in-process model. Used by
/// `advlm serve` and as the reference peer in tests.
class OracleServer {
 public:
  explicit OracleServer(const DifferentiableModel& model, RewriterClient* rewriter = nullptr,
                        CodecLimits limits = {});

  // Answers one request line (without '\n'); never throws. Malformed lines
  // produce an error response whose id is the request id when readable,
  // else "".
  std::string handle(std::string_view line) const;

  // Serves newline-delimited requests until end of input.
  void serve(int in_fd, int out_fd) const;

 private:
  const DifferentiableModel& model_;
  RewriterClient* rewriter_;
  CodecLimits limits_;
};

// Error code a model side reports when the model itself rejects a request.
inline constexpr std::string_view kModelErrorCode = "model-error";

}  // namespace advlm

#endif  // ADVLM_ORACLE_SERVER_HPP_
