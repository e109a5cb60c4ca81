#ifndef ADVLM_TRANSPORT_HPP_
#define ADVLM_TRANSPORT_HPP_

#include <memory>
#include <string>
#include <string_view>
#include <sys/types.h>

namespace advlm {

/// A line-oriented duplex byte stream to an oracle peer. One conversation at
/// a time; callers serialize access.
class Transport {
 public:
  virtual ~Transport() = default;
  // `line` must end with '\n'. Throws ProtocolError on timeout or a closed peer.
  virtual void send_line(std::string_view line, double timeout_seconds) = 0;
  // Next line without its '\n'.
  virtual std::string read_line(double timeout_seconds, std::size_t max_bytes) = 0;
  virtual std::string describe() const = 0;
};

// Shared poll()-based implementation over a pair of file descriptors.
class FdTransport : public Transport {
 public:
  FdTransport(int read_fd, int write_fd);
  ~FdTransport() override;
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;

  void send_line(std::string_view line, double timeout_seconds) override;
  std::string read_line(double timeout_seconds, std::size_t max_bytes) override;

 protected:
  void close_fds();

 private:
  int read_fd_;
  int write_fd_;
  std::string buffer_;
};

/// Runs `command` through /bin/sh -c and talks to its stdin/stdout. The child
/// is terminated when the transport is destroyed.
class ChildProcessTransport : public FdTransport {
 public:
  static std::unique_ptr<ChildProcessTransport> spawn(const std::string& command);
  ~ChildProcessTransport() override;

  std::string describe() const override { return "cmd:" + command_; }
  pid_t pid() const { return pid_; }

 private:
  ChildProcessTransport(int read_fd, int write_fd, pid_t pid, std::string command);
  pid_t pid_;
  std::string command_;
};

class TcpTransport : public FdTransport {
 public:
  static std::unique_ptr<TcpTransport> connect(const std::string& host, int port,
                                               double timeout_seconds = 10.0);
  std::string describe() const override { return endpoint_; }

 private:
  TcpTransport(int fd, std::string endpoint);
  std::string endpoint_;
};

// "cmd:<shell command>" or "tcp:<host>:<port>".
std::unique_ptr<Transport> open_transport(std::string_view spec);

}  // namespace advlm

#endif  // ADVLM_TRANSPORT_HPP_
