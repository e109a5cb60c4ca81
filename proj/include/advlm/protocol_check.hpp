#ifndef ADVLM_PROTOCOL_CHECK_HPP_
#define ADVLM_PROTOCOL_CHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "advlm/model.hpp"
#include "advlm/protocol.hpp"
#include "advlm/transport.hpp"

namespace advlm {

struct ProtocolCheckOptions {
  std::size_t fuzz_lines = 1000;
  std::uint64_t seed = 0;
  double timeout_seconds = 10.0;
  // In-process twin of the served model; enables the equivalence checks.
  const DifferentiableModel* twin = nullptr;
  std::size_t twin_fixtures = 20;
  double tolerance = 1e-6;
  int trajectory_iterations = 10;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ProtocolCheckReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

/// Validates a peer: describe handshake, `fuzz_lines` malformed requests
/// each answered by an error without dropping the connection, a valid
/// loss_and_grad afterwards, and with a twin, loss/gradient agreement on
/// seeded fixtures plus an FGSM and a PGD trajectory matched step by step.
ProtocolCheckReport protocol_check(Transport& transport, const ProtocolCheckOptions& options);

// Deterministic corpus of single-line malformed requests for `slots`.
std::vector<std::string> malformed_requests(std::size_t count, std::uint64_t seed,
                                            const std::vector<Shape>& slots);

}  // namespace advlm

#endif  // ADVLM_PROTOCOL_CHECK_HPP_
