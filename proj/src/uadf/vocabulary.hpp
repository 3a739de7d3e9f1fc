#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uadf {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;

inline constexpr std::string_view kBosText = "<s>";
inline constexpr std::string_view kEosText = "</s>";
inline constexpr std::string_view kUnkText = "<unk>";

// Bijective id <-> string map. Ids 0, 1, 2 are always BOS, EOS and UNK.
class Vocabulary {
 public:
  // `words` must not contain the reserved surface forms; duplicates are rejected.
  static Vocabulary from_words(std::span<const std::string> words);
  // One token per line, line number = id, first three lines are BOS/EOS/UNK.
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  // Unknown strings map to UNK.
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;

  // SHA-256 of serialize(), lowercase hex (64 chars). Used by the wire handshake.
  std::string hash() const;

  // Whitespace tokenization; words outside the vocabulary become UNK. No BOS/EOS added.
  TokenSeq encode(std::string_view text) const;
  // Drops BOS and EOS, joins the rest with single spaces.
  std::string decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Lowercases and splits on whitespace.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(std::span<const std::string> words);

// Checks the TokenSeq invariants (ids < V, at most one EOS and only as the last element).
void validate_sequence(std::span<const TokenId> seq, std::size_t vocab_size);

}  // namespace uadf
