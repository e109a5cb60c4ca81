#include "advlm/transport.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <mutex>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "advlm/error.hpp"
#include "advlm/protocol.hpp"

namespace advlm {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

void set_nonblocking(int fd) {
  const int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

Clock::time_point deadline_after(double seconds) {
  return Clock::now() + std::chrono::microseconds(static_cast<long long>(seconds * 1e6));
}

// Waits for `events` on fd; false on timeout.
bool wait_fd(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw ProtocolError(ProtocolErrorCode::kTransportClosed, std::strerror(errno));
  }
}

}  // namespace

FdTransport::FdTransport(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {
  ignore_sigpipe();
  set_nonblocking(read_fd_);
  if (write_fd_ != read_fd_) set_nonblocking(write_fd_);
}

FdTransport::~FdTransport() { close_fds(); }

void FdTransport::close_fds() {
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  read_fd_ = write_fd_ = -1;
}

void FdTransport::send_line(std::string_view line, double timeout_seconds) {
  if (write_fd_ < 0) throw ProtocolError(ProtocolErrorCode::kTransportClosed, "transport closed");
  const auto deadline = deadline_after(timeout_seconds);
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::write(write_fd_, line.data() + sent, line.size() - sent);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      if (!wait_fd(write_fd_, POLLOUT, deadline)) {
        throw ProtocolError(ProtocolErrorCode::kTimeout, "peer stopped reading (" + describe() + ")");
      }
      continue;
    }
    throw ProtocolError(ProtocolErrorCode::kTransportClosed,
                        "write to " + describe() + " failed: " + std::strerror(errno));
  }
}

std::string FdTransport::read_line(double timeout_seconds, std::size_t max_bytes) {
  if (read_fd_ < 0) throw ProtocolError(ProtocolErrorCode::kTransportClosed, "transport closed");
  const auto deadline = deadline_after(timeout_seconds);
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (line.size() > max_bytes) {
        throw ProtocolError(ProtocolErrorCode::kOversizeLine, "response line exceeds the cap");
      }
      return line;
    }
    if (buffer_.size() > max_bytes) {
      throw ProtocolError(ProtocolErrorCode::kOversizeLine, "response line exceeds the cap");
    }
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n > 0) {
      buffer_.append(chunk, static_cast<std::size_t>(n));
      continue;
    }
    if (n == 0) {
      throw ProtocolError(ProtocolErrorCode::kTransportClosed, "peer closed the stream (" + describe() + ")");
    }
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) {
      if (!wait_fd(read_fd_, POLLIN, deadline)) {
        throw ProtocolError(ProtocolErrorCode::kTimeout, "no response from " + describe() + " within " +
                                                             std::to_string(timeout_seconds) + " s");
      }
      continue;
    }
    throw ProtocolError(ProtocolErrorCode::kTransportClosed,
                        "read from " + describe() + " failed: " + std::strerror(errno));
  }
}

// ---------------------------------------------------------------------------

ChildProcessTransport::ChildProcessTransport(int read_fd, int write_fd, pid_t pid, std::string command)
    : FdTransport(read_fd, write_fd), pid_(pid), command_(std::move(command)) {}

std::unique_ptr<ChildProcessTransport> ChildProcessTransport::spawn(const std::string& command) {
  int to_child[2], from_child[2];
  if (pipe2(to_child, O_CLOEXEC) != 0) throw ModelError("pipe failed");
  if (pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw ModelError("pipe failed");
  }
  const pid_t pid = fork();
  if (pid < 0) throw ModelError("fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::unique_ptr<ChildProcessTransport>(
      new ChildProcessTransport(from_child[0], to_child[1], pid, command));
}

ChildProcessTransport::~ChildProcessTransport() {
  close_fds();
  if (pid_ > 0) {
    // Give the child a moment to exit on end-of-stream before forcing it.
    for (int i = 0; i < 20; ++i) {
      if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
        kill(-pid_, SIGKILL);
        return;
      }
      usleep(5000);
    }
    kill(-pid_, SIGKILL);
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
  }
}

TcpTransport::TcpTransport(int fd, std::string endpoint)
    : FdTransport(fd, fd), endpoint_(std::move(endpoint)) {}

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& host, int port,
                                                    double timeout_seconds) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0) {
    throw ModelError("cannot resolve " + host);
  }
  std::string last_error = "no address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    set_nonblocking(fd);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      if (wait_fd(fd, POLLOUT, deadline_after(timeout_seconds))) {
        int err = 0;
        socklen_t len = sizeof(err);
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      freeaddrinfo(res);
      return std::unique_ptr<TcpTransport>(new TcpTransport(fd, "tcp:" + host + ":" + service));
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  freeaddrinfo(res);
  throw ModelError("cannot connect to " + host + ":" + service + ": " + last_error);
}

std::unique_ptr<Transport> open_transport(std::string_view spec) {
  if (spec.starts_with("cmd:")) return ChildProcessTransport::spawn(std::string(spec.substr(4)));
  if (spec.starts_with("tcp:")) {
    const std::string rest(spec.substr(4));
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("tcp endpoint must be tcp:<host>:<port>");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("bad port in endpoint '" + std::string(spec) + "'");
    }
    return TcpTransport::connect(rest.substr(0, colon), port);
  }
  throw InvalidArgument("endpoint must start with cmd: or tcp:, got '" + std::string(spec) + "'");
}

}  // namespace advlm
