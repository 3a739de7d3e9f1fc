#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "uadf/provider.hpp"
#include "uadf/vocabulary.hpp"

namespace testing {

using uadf::Logits;
using uadf::TokenId;
using uadf::TokenSeq;

inline std::shared_ptr<const uadf::Vocabulary> make_vocab(std::vector<std::string> words) {
  return std::make_shared<const uadf::Vocabulary>(uadf::Vocabulary::from_words(words));
}

// V - 3 placeholder words w0, w1, ...
inline std::shared_ptr<const uadf::Vocabulary> sized_vocab(std::size_t v) {
  std::vector<std::string> words;
  for (std::size_t i = 3; i < v; ++i) words.push_back("w" + std::to_string(i - 3));
  return make_vocab(words);
}

using LogitFn = std::function<std::vector<double>(std::span<const TokenId>, const uadf::UtteranceContext&)>;

class FnProvider final : public uadf::LogitProvider {
 public:
  FnProvider(std::shared_ptr<const uadf::Vocabulary> vocab, LogitFn fn) : LogitProvider(std::move(vocab)), fn_(std::move(fn)) {}
  uadf::ProviderKind kind() const override { return uadf::ProviderKind::kCallback; }

 protected:
  Logits compute(std::span<const TokenId> history, const uadf::UtteranceContext& ctx) const override {
    return Logits(fn_(history, ctx));
  }

 private:
  LogitFn fn_;
};

// Logits drawn from N(0, scale^2), a pure function of (seed, history).
inline std::vector<double> hashed_logits(std::uint64_t seed, std::span<const TokenId> history, std::size_t v,
                                         double scale = 2.0) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (TokenId t : history) h = (h ^ t) * 0x100000001b3ULL + 0x7f4a7c15ULL;
  std::mt19937_64 rng(h);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> out(v);
  for (auto& x : out) x = n(rng);
  return out;
}

inline uadf::UtteranceContext empty_context(std::shared_ptr<const uadf::Vocabulary> vocab, std::string id = "u") {
  return uadf::make_context(std::move(id), {}, {}, std::move(vocab));
}

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (;;) {
      path_ = base / ("uadf-test-" + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace testing
