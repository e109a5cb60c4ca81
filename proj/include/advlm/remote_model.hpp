#ifndef ADVLM_REMOTE_MODEL_HPP_
#define ADVLM_REMOTE_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <mutex>

#include "advlm/model.hpp"
#include "advlm/protocol.hpp"
#include "advlm/transport.hpp"

namespace advlm {

struct RemoteOptions {
  double timeout_seconds = 120.0;
  std::size_t max_line_bytes = kDefaultMaxLineBytes;
};

/// DifferentiableModel backed by an oracle peer. The constructor performs the
/// "describe" handshake; every loss_and_grad is one request/response exchange.
/// Calls on one instance are serialized; use one instance per worker.
class RemoteModel : public DifferentiableModel {
 public:
  RemoteModel(std::unique_ptr<Transport> transport, RemoteOptions options = {});

  std::string id() const override { return described_.model; }
  std::vector<Shape> input_shapes() const override { return described_.slots; }
  LossAndGrad evaluate(std::span<const ImageTensor> inputs, std::string_view prompt,
                       const Target& target) const override;
  std::string generate(std::span<const ImageTensor> inputs, std::string_view prompt) const override;

  const DescribeResult& description() const { return described_; }

 private:
  OracleResponse exchange(OracleRequest request) const;

  mutable std::mutex mu_;
  std::unique_ptr<Transport> transport_;
  RemoteOptions options_;
  mutable std::uint64_t next_id_ = 0;
  DescribeResult described_;
};

}  // namespace advlm

#endif  // ADVLM_REMOTE_MODEL_HPP_
