#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "json.hpp"
#include "mttt/array_io.hpp"
#include "mttt/reconstructor.hpp"

extern char** environ;

namespace mttt {

ExternalReconstructor::ExternalReconstructor(std::vector<std::string> command, Shape shape,
                                             std::chrono::milliseconds timeout)
    : command_(std::move(command)), shape_(std::move(shape)), timeout_(timeout) {
  if (command_.empty()) throw ExternalError(ExternalError::Kind::Startup, "external reconstructor: empty command");
  validate_shape(shape_);

  int sv[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
    throw ExternalError(ExternalError::Kind::Startup, std::string("socketpair: ") + std::strerror(errno));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, sv[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, sv[1], STDOUT_FILENO);

  std::vector<char*> argv;
  for (auto& a : command_) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = -1;
  const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(sv[1]);
  if (rc != 0) {
    close(sv[0]);
    throw ExternalError(ExternalError::Kind::Startup,
                        "external reconstructor: cannot spawn " + command_[0] + ": " + std::strerror(rc));
  }
  fd_ = sv[0];
  pid_ = pid;

  nlohmann::json hello = {{"proto", 1}, {"shape", shape_}};
  const std::string line = hello.dump() + "\n";
  try {
    write_all(reinterpret_cast<const std::uint8_t*>(line.data()), line.size());
    std::string reply;
    std::uint8_t ch = 0;
    while (true) {
      read_exact(&ch, 1, false);
      if (ch == '\n') break;
      reply.push_back(char(ch));
      if (reply.size() > 4096) fail(ExternalError::Kind::Startup, "external reconstructor: handshake too long");
    }
    const auto j = nlohmann::json::parse(reply, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("ok") || j["ok"] != true)
      fail(ExternalError::Kind::Startup, "external reconstructor: bad handshake reply: " + reply);
  } catch (const ExternalError& e) {
    if (e.kind() == ExternalError::Kind::Startup) throw;
    throw ExternalError(ExternalError::Kind::Startup, std::string("external reconstructor: handshake failed: ") + e.what());
  }
}

ExternalReconstructor::~ExternalReconstructor() { shutdown(); }

void ExternalReconstructor::shutdown() const {
  if (fd_ >= 0) {
    close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void ExternalReconstructor::fail(ExternalError::Kind kind, const std::string& message) const {
  shutdown();
  throw ExternalError(kind, message);
}

void ExternalReconstructor::write_all(const std::uint8_t* data, std::size_t n) const {
  if (fd_ < 0) throw ExternalError(ExternalError::Kind::ChildExited, "external reconstructor: child not running");
  while (n > 0) {
    pollfd pfd{fd_, POLLOUT, 0};
    const int r = poll(&pfd, 1, int(timeout_.count()));
    if (r == 0) fail(ExternalError::Kind::Timeout, "external reconstructor: write timed out");
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(ExternalError::Kind::ChildExited, std::string("external reconstructor: poll: ") + std::strerror(errno));
    }
    const ssize_t w = send(fd_, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(ExternalError::Kind::ChildExited, "external reconstructor: child closed its input");
    }
    data += w;
    n -= std::size_t(w);
  }
}

void ExternalReconstructor::read_exact(std::uint8_t* data, std::size_t n, bool mid_frame) const {
  if (fd_ < 0) throw ExternalError(ExternalError::Kind::ChildExited, "external reconstructor: child not running");
  while (n > 0) {
    pollfd pfd{fd_, POLLIN, 0};
    const int r = poll(&pfd, 1, int(timeout_.count()));
    if (r == 0) fail(ExternalError::Kind::Timeout, "external reconstructor: read timed out");
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(ExternalError::Kind::ChildExited, std::string("external reconstructor: poll: ") + std::strerror(errno));
    }
    const ssize_t got = recv(fd_, data, n, 0);
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(ExternalError::Kind::ChildExited, "external reconstructor: read failed");
    }
    if (got == 0) {
      if (mid_frame) fail(ExternalError::Kind::Truncated, "external reconstructor: frame truncated");
      fail(ExternalError::Kind::ChildExited, "external reconstructor: child exited");
    }
    mid_frame = true;
    data += got;
    n -= std::size_t(got);
  }
}

ComplexVolume ExternalReconstructor::apply(const ComplexVolume& x) const {
  check_input(x);
  const auto payload = encode_array(x);
  std::uint8_t len[4];
  const auto n = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) len[i] = std::uint8_t(n >> (8 * i));
  write_all(len, 4);
  write_all(payload.data(), payload.size());

  read_exact(len, 4, false);
  std::uint32_t m = 0;
  for (int i = 0; i < 4; ++i) m |= std::uint32_t(len[i]) << (8 * i);
  if (m > (1u << 30)) fail(ExternalError::Kind::Malformed, "external reconstructor: frame too large");
  std::vector<std::uint8_t> reply(m);
  read_exact(reply.data(), m, true);
  ComplexVolume out;
  try {
    out = decode_array(reply);
  } catch (const Error& e) {
    fail(ExternalError::Kind::Malformed, std::string("external reconstructor: malformed frame: ") + e.what());
  }
  if (out.shape() != x.shape())
    throw ExternalError(ExternalError::Kind::ShapeMismatch,
                        "external reconstructor: reply shape " + shape_string(out.shape()) + ", expected " +
                            shape_string(x.shape()));
  return out;
}

}  // namespace mttt
