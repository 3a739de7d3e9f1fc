#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "uadf/provider.hpp"

namespace uadf {

// Newline-delimited text transport over a pair of file descriptors, with a
// receive timeout. Owns the descriptors (and a child process, if any).
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, int child_pid = -1);
  ~LineChannel();

  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  // Spawns `/bin/sh -c command` with its stdin/stdout connected to the channel.
  static std::unique_ptr<LineChannel> spawn(const std::string& command);
  // Connects to host:port over TCP.
  static std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port);

  void write_line(const std::string& line);
  // Returns nullopt on orderly end of stream. Throws kProviderIo on timeout or read error.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);

 private:
  int read_fd_;
  int write_fd_;
  int child_pid_;
  std::string buffer_;
};

// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

std::string hello_request(std::size_t vocab_size, const std::string& vocab_hash);
std::string step_request(const std::string& utterance_id, std::span<const TokenId> history);
std::string logits_response(const Logits& logits);

// Client side of the step protocol. Each next_logits call is one request and
// one response on a single connection guarded by a mutex.
class ExternalProvider final : public LogitProvider {
 public:
  ExternalProvider(std::shared_ptr<const Vocabulary> vocabulary, std::unique_ptr<LineChannel> channel,
                   std::chrono::milliseconds timeout);

  ProviderKind kind() const override { return ProviderKind::kExternal; }

 protected:
  Logits compute(std::span<const TokenId> history, const UtteranceContext& ctx) const override;

 private:
  std::string exchange(const std::string& request) const;

  mutable std::mutex mutex_;
  std::unique_ptr<LineChannel> channel_;
  std::chrono::milliseconds timeout_;
};

// `endpoint` is either "tcp://host:port" or a shell command speaking the
// protocol on stdin/stdout. Performs the hello handshake before returning.
std::unique_ptr<ExternalProvider> connect_external(std::shared_ptr<const Vocabulary> vocabulary,
                                                   const std::string& endpoint, std::chrono::milliseconds timeout);

// Server loop: answers hello and step requests until the input closes.
// Returns the number of step requests served.
std::size_t serve_provider(const LogitProvider& provider, const std::map<std::string, UtteranceContext>& contexts,
                           LineChannel& channel);

// Accepts TCP connections on `port` and serves them one after another.
// `max_connections` of 0 means serve forever.
void serve_provider_tcp(const LogitProvider& provider, const std::map<std::string, UtteranceContext>& contexts,
                        int port, std::size_t max_connections);

}  // namespace uadf
