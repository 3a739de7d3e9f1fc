#include "uadf/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "uadf/error.hpp"

namespace uadf {

namespace {

[[noreturn]] void io_fail(const std::string& what) { fail(ErrorCode::kProviderIo, what); }

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

LineChannel::LineChannel(int read_fd, int write_fd, int child_pid)
    : read_fd_(read_fd), write_fd_(write_fd), child_pid_(child_pid) {
  ignore_sigpipe();
}

LineChannel::~LineChannel() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  if (child_pid_ > 0) {
    int status = 0;
    // The child sees EOF on stdin and exits; reap it. Kill it if it lingers.
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(child_pid_, &status, WNOHANG) != 0) return;
      ::usleep(10000);
    }
    ::kill(-child_pid_, SIGKILL);
    ::waitpid(child_pid_, &status, 0);
  }
}

std::unique_ptr<LineChannel> LineChannel::spawn(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) io_fail("pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    io_fail("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) io_fail("fork failed");
  if (pid == 0) {
    // own process group, so a lingering shell pipeline can be killed as a whole
    ::setpgid(0, 0);
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<LineChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> LineChannel::connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || res == nullptr) {
    io_fail("cannot resolve " + host);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) io_fail("cannot connect to " + host + ":" + service);
  return std::make_unique<LineChannel>(fd, fd);
}

void LineChannel::write_line(const std::string& line) {
  std::string data = line;
  data += '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail(std::string("write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> LineChannel::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) io_fail("timed out waiting for provider response");
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      io_fail(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) io_fail("timed out waiting for provider response");
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      if (buffer_.empty()) return std::nullopt;
      std::string line = std::move(buffer_);
      buffer_.clear();
      return line;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string hello_request(std::size_t vocab_size, const std::string& vocab_hash) {
  return R"({"op":"hello","vocab_size":)" + std::to_string(vocab_size) + R"(,"vocab_hash":")" + vocab_hash + "\"}";
}

std::string step_request(const std::string& utterance_id, std::span<const TokenId> history) {
  std::string out = R"({"op":"step","utt":)" + nlohmann::json(utterance_id).dump() + R"(,"history":[)";
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(history[i]);
  }
  return out + "]}";
}

std::string logits_response(const Logits& logits) {
  std::string out = R"({"logits":[)";
  const auto values = logits.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out + "]}";
}

ExternalProvider::ExternalProvider(std::shared_ptr<const Vocabulary> vocabulary, std::unique_ptr<LineChannel> channel,
                                   std::chrono::milliseconds timeout)
    : LogitProvider(std::move(vocabulary)), channel_(std::move(channel)), timeout_(timeout) {
  const std::string reply = exchange(hello_request(vocab_size(), this->vocabulary().hash()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    io_fail("malformed handshake response: " + reply);
  }
  if (!doc.is_object() || !doc.contains("ok") || !doc["ok"].is_boolean()) io_fail("malformed handshake response: " + reply);
  if (!doc["ok"].get<bool>()) {
    const std::string why = doc.contains("error") && doc["error"].is_string() ? doc["error"].get<std::string>() : "rejected";
    fail(ErrorCode::kConfiguration, "provider handshake failed: " + why);
  }
}

std::string ExternalProvider::exchange(const std::string& request) const {
  std::lock_guard lock(mutex_);
  channel_->write_line(request);
  auto line = channel_->read_line(timeout_);
  if (!line) io_fail("provider closed the connection");
  return *line;
}

Logits ExternalProvider::compute(std::span<const TokenId> history, const UtteranceContext& ctx) const {
  const std::string reply = exchange(step_request(ctx.id, history));
  std::vector<double> values;
  try {
    const auto doc = nlohmann::json::parse(reply);
    if (!doc.is_object() || !doc.contains("logits") || !doc["logits"].is_array()) {
      io_fail("malformed step response: " + reply.substr(0, 200));
    }
    const auto& arr = doc["logits"];
    values.reserve(arr.size());
    for (const auto& v : arr) {
      if (!v.is_number()) io_fail("step response holds a non-numeric logit");
      values.push_back(v.get<double>());
    }
  } catch (const nlohmann::json::exception&) {
    io_fail("malformed step response: " + reply.substr(0, 200));
  }
  if (values.size() != vocab_size()) {
    io_fail("step response has " + std::to_string(values.size()) + " logits, expected " + std::to_string(vocab_size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) io_fail("step response holds a non-finite logit");
  }
  return Logits(std::move(values));
}

std::unique_ptr<ExternalProvider> connect_external(std::shared_ptr<const Vocabulary> vocabulary,
                                                   const std::string& endpoint, std::chrono::milliseconds timeout) {
  constexpr std::string_view kTcp = "tcp://";
  std::unique_ptr<LineChannel> channel;
  if (endpoint.starts_with(kTcp)) {
    const std::string rest = endpoint.substr(kTcp.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) fail(ErrorCode::kConfiguration, "tcp endpoint needs host:port");
    int port = 0;
    const auto port_text = rest.substr(colon + 1);
    const auto res = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (res.ec != std::errc{} || port <= 0 || port > 65535) fail(ErrorCode::kConfiguration, "bad tcp port in " + endpoint);
    channel = LineChannel::connect_tcp(rest.substr(0, colon), port);
  } else {
    if (endpoint.empty()) fail(ErrorCode::kConfiguration, "empty provider endpoint");
    channel = LineChannel::spawn(endpoint);
  }
  return std::make_unique<ExternalProvider>(std::move(vocabulary), std::move(channel), timeout);
}

namespace {

std::string error_reply(const std::string& what) { return nlohmann::json{{"error", what}}.dump(); }

}  // namespace

std::size_t serve_provider(const LogitProvider& provider, const std::map<std::string, UtteranceContext>& contexts,
                           LineChannel& channel) {
  std::size_t served = 0;
  const std::string own_hash = provider.vocabulary().hash();
  for (;;) {
    auto line = channel.read_line(std::chrono::hours(24 * 365));
    if (!line) return served;
    if (line->empty()) continue;
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(*line);
    } catch (const nlohmann::json::exception&) {
      channel.write_line(error_reply("unparseable request"));
      continue;
    }
    const std::string op = req.is_object() && req.contains("op") && req["op"].is_string() ? req["op"].get<std::string>() : "";
    if (op == "hello") {
      const bool size_ok = req.contains("vocab_size") && req["vocab_size"] == provider.vocab_size();
      const bool hash_ok = req.contains("vocab_hash") && req["vocab_hash"] == own_hash;
      if (size_ok && hash_ok) {
        channel.write_line(R"({"ok":true})");
      } else {
        channel.write_line(nlohmann::json{{"ok", false}, {"error", "vocabulary mismatch"}}.dump());
      }
    } else if (op == "step") {
      try {
        const auto utt = req.at("utt").get<std::string>();
        const auto history = req.at("history").get<TokenSeq>();
        auto it = contexts.find(utt);
        if (it == contexts.end()) {
          channel.write_line(error_reply("unknown utterance " + utt));
          continue;
        }
        channel.write_line(logits_response(provider.next_logits(history, it->second)));
        ++served;
      } catch (const nlohmann::json::exception&) {
        channel.write_line(error_reply("malformed step request"));
      } catch (const Error& e) {
        channel.write_line(error_reply(e.what()));
      }
    } else {
      channel.write_line(error_reply("unknown op"));
    }
  }
}

void serve_provider_tcp(const LogitProvider& provider, const std::map<std::string, UtteranceContext>& contexts, int port,
                        std::size_t max_connections) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) io_fail("socket failed");
  const int yes = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listener, 4) != 0) {
    ::close(listener);
    io_fail("cannot listen on port " + std::to_string(port));
  }
  for (std::size_t n = 0; max_connections == 0 || n < max_connections; ++n) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) {
        --n;
        continue;
      }
      break;
    }
    LineChannel channel(fd, fd);
    try {
      serve_provider(provider, contexts, channel);
    } catch (const Error&) {
      // A broken client connection ends that session only.
    }
  }
  ::close(listener);
}

}  // namespace uadf
