#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <thread>
#include <unistd.h>

#include "helpers.hpp"
#include "uadf/decoding.hpp"
#include "uadf/error.hpp"
#include "uadf/ngram.hpp"
#include "uadf/wire.hpp"

using namespace uadf;
using namespace std::chrono_literals;

namespace {

std::string fake(const std::string& mode, std::size_t v) {
  return std::string(FAKE_PROVIDER_PATH) + " " + mode + " " + std::to_string(v);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidParameter;
}

// A provider served in-process over a pair of pipes.
struct Loopback {
  std::unique_ptr<ExternalProvider> client;
  std::thread server;
  std::unique_ptr<LineChannel> server_channel;

  Loopback(const LogitProvider& provider, const std::map<std::string, UtteranceContext>& contexts) {
    int to_server[2], to_client[2];
    REQUIRE(pipe(to_server) == 0);
    REQUIRE(pipe(to_client) == 0);
    server_channel = std::make_unique<LineChannel>(to_server[0], to_client[1]);
    server = std::thread([&provider, &contexts, ch = server_channel.get()] { serve_provider(provider, contexts, *ch); });
    client = std::make_unique<ExternalProvider>(provider.vocabulary_ptr(),
                                                std::make_unique<LineChannel>(to_client[0], to_server[1]), 5000ms);
  }
  ~Loopback() {
    client.reset();  // closes the server's input
    server.join();
  }
};

}  // namespace

TEST_CASE("formatted doubles parse back exactly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = n(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(std::stod(format_double(-745.0)) == -745.0);
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("request builders") {
  CHECK(step_request("utt \"1\"", TokenSeq{0, 5}) == R"({"op":"step","utt":"utt \"1\"","history":[0,5]})");
  CHECK(hello_request(7, "ab") == R"({"op":"hello","vocab_size":7,"vocab_hash":"ab"})");
  CHECK(logits_response(Logits({1.0, -0.25})) == R"({"logits":[1,-0.25]})");
}

TEST_CASE("fixed-logit server makes every step choose id 0") {
  auto v = testing::sized_vocab(6);
  auto p = connect_external(v, fake("fixed", 6), 2000ms);
  CHECK(p->kind() == ProviderKind::kExternal);
  const auto r = greedy_decode(*p, testing::empty_context(v), 4);
  CHECK(r.tokens == TokenSeq{0, 0, 0, 0});
}

TEST_CASE("protocol violations surface as provider-io errors") {
  auto v = testing::sized_vocab(6);
  auto ctx = testing::empty_context(v);
  CHECK(code_of([&] { connect_external(v, fake("short", 6), 2000ms)->next_logits(TokenSeq{kBos}, ctx); }) ==
        ErrorCode::kProviderIo);
  CHECK(code_of([&] { connect_external(v, fake("garbage", 6), 2000ms)->next_logits(TokenSeq{kBos}, ctx); }) ==
        ErrorCode::kProviderIo);
  CHECK(code_of([&] { connect_external(v, fake("nan", 6), 2000ms)->next_logits(TokenSeq{kBos}, ctx); }) ==
        ErrorCode::kProviderIo);
  CHECK(code_of([&] { connect_external(v, fake("close", 6), 2000ms)->next_logits(TokenSeq{kBos}, ctx); }) ==
        ErrorCode::kProviderIo);
  const auto start = std::chrono::steady_clock::now();
  CHECK(code_of([&] { connect_external(v, fake("silent", 6), 200ms)->next_logits(TokenSeq{kBos}, ctx); }) ==
        ErrorCode::kProviderIo);
  CHECK(std::chrono::steady_clock::now() - start < 5s);
}

TEST_CASE("handshake refusal is a configuration error") {
  auto v = testing::sized_vocab(6);
  CHECK(code_of([&] { connect_external(v, fake("reject", 6), 2000ms); }) == ErrorCode::kConfiguration);
  CHECK(code_of([&] { connect_external(v, "tcp://localhost", 2000ms); }) == ErrorCode::kConfiguration);
  CHECK(code_of([&] { connect_external(v, "", 2000ms); }) == ErrorCode::kConfiguration);
}

TEST_CASE("served corrector decodes exactly like the in-process one") {
  auto v = testing::make_vocab({"show", "me", "flights", "to", "from", "boston", "denver"});
  std::vector<TrainingPair> train = {{{}, v->encode("show me flights to boston")},
                                     {{}, v->encode("show me flights from denver to boston")},
                                     {{}, v->encode("flights to denver")}};
  auto lm = train_ngram_corrector(v, train, {3, 0.05, 0.5});
  std::map<std::string, UtteranceContext> contexts;
  contexts.emplace("a", make_context("a", {v->encode("show me flights to denver"), v->encode("show flights to boston")}, {}, v));
  contexts.emplace("b", make_context("b", {v->encode("flights from boston")}, {}, v));

  Loopback loop(*lm, contexts);
  for (const auto& [id, ctx] : contexts) {
    const auto direct = greedy_decode(*lm, ctx, 12);
    const auto remote = greedy_decode(*loop.client, ctx, 12);
    CHECK(direct.tokens == remote.tokens);
    TokenSeq h{kBos};
    for (TokenId t : direct.tokens) {
      CHECK(lm->next_logits(h, ctx) == loop.client->next_logits(h, ctx));
      h.push_back(t);
    }
  }
  // Unknown utterances come back as an error reply.
  CHECK(code_of([&] { loop.client->next_logits(TokenSeq{kBos}, make_context("zzz", {}, {}, v)); }) ==
        ErrorCode::kProviderIo);
}

TEST_CASE("server refuses a client with another vocabulary") {
  auto v = testing::make_vocab({"a", "b"});
  auto other = testing::make_vocab({"a", "c"});
  auto lm = train_ngram_corrector(v, std::vector<TrainingPair>{{{}, v->encode("a b")}}, {2, 0.1, 0.0});
  std::map<std::string, UtteranceContext> contexts;
  int to_server[2], to_client[2];
  REQUIRE(pipe(to_server) == 0);
  REQUIRE(pipe(to_client) == 0);
  LineChannel server_channel(to_server[0], to_client[1]);
  std::thread server([&] { serve_provider(*lm, contexts, server_channel); });
  CHECK(code_of([&] {
          ExternalProvider(other, std::make_unique<LineChannel>(to_client[0], to_server[1]), 2000ms);
        }) == ErrorCode::kConfiguration);
  server.join();
}
