#include "uadf/vocabulary.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "uadf/error.hpp"

namespace uadf {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3) fail(ErrorCode::kInvalidInput, "vocabulary needs at least the three reserved tokens");
  if (tokens_[kBos] != kBosText || tokens_[kEos] != kEosText || tokens_[kUnk] != kUnkText) {
    fail(ErrorCode::kInvalidInput, "vocabulary must start with <s>, </s>, <unk>");
  }
  index_.reserve(tokens_.size());
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); })) {
      fail(ErrorCode::kInvalidInput, "vocabulary token " + std::to_string(i) + " is empty or contains whitespace");
    }
    if (!index_.emplace(t, i).second) fail(ErrorCode::kInvalidInput, "duplicate vocabulary token '" + t + "'");
  }
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  std::vector<std::string> tokens{std::string(kBosText), std::string(kEosText), std::string(kUnkText)};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(std::move(line));
    pos = nl + 1;
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open vocabulary file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write vocabulary file " + path.string());
  out << serialize();
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) fail(ErrorCode::kInvalidInput, "token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(std::string(word)); }

std::string Vocabulary::hash() const {
  const std::string data = serialize();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

TokenSeq Vocabulary::encode(std::string_view text) const {
  TokenSeq ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void validate_sequence(std::span<const TokenId> seq, std::size_t vocab_size) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] >= vocab_size) fail(ErrorCode::kInvalidInput, "token id out of vocabulary range");
    if (seq[i] == kEos && i + 1 != seq.size()) fail(ErrorCode::kInvalidInput, "EOS must be terminal");
  }
}

}  // namespace uadf
