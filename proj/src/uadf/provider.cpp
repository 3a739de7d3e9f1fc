#include "uadf/provider.hpp"

#include <cmath>
#include <limits>

#include "uadf/error.hpp"

namespace uadf {

namespace {

TokenSeq strip_markers(TokenSeq seq) {
  if (!seq.empty() && seq.front() == kBos) seq.erase(seq.begin());
  if (!seq.empty() && seq.back() == kEos) seq.pop_back();
  return seq;
}

}  // namespace

UtteranceContext make_context(std::string id, std::vector<TokenSeq> nbest, TokenSeq observation,
                              std::shared_ptr<const Vocabulary> vocabulary) {
  UtteranceContext ctx;
  ctx.id = std::move(id);
  ctx.vocabulary = std::move(vocabulary);
  ctx.observation = strip_markers(std::move(observation));
  ctx.nbest.reserve(nbest.size());
  for (auto& h : nbest) ctx.nbest.push_back(strip_markers(std::move(h)));
  const std::size_t v = ctx.vocabulary ? ctx.vocabulary->size() : 0;
  if (v != 0) {
    validate_sequence(ctx.observation, v);
    for (const auto& h : ctx.nbest) validate_sequence(h, v);
  }
  return ctx;
}

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kNgramCorrector: return "ngram-corrector";
    case ProviderKind::kAcousticChannel: return "acoustic-channel";
    case ProviderKind::kExternal: return "external";
    case ProviderKind::kCallback: return "callback";
  }
  return "unknown";
}

LogitProvider::LogitProvider(std::shared_ptr<const Vocabulary> vocabulary) : vocabulary_(std::move(vocabulary)) {
  if (!vocabulary_) fail(ErrorCode::kConfiguration, "provider requires a vocabulary");
}

bool same_vocabulary(const Vocabulary& a, const Vocabulary& b) { return &a == &b || a == b; }

Logits LogitProvider::next_logits(std::span<const TokenId> history, const UtteranceContext& ctx) const {
  if (ctx.vocabulary && !same_vocabulary(*ctx.vocabulary, *vocabulary_)) {
    fail(ErrorCode::kConfiguration, "utterance context vocabulary does not match the provider vocabulary");
  }
  if (history.empty() || history.front() != kBos) fail(ErrorCode::kInvalidInput, "history must begin with BOS");
  for (TokenId id : history) {
    if (id >= vocab_size()) fail(ErrorCode::kInvalidInput, "history token id out of range");
  }
  Logits out = compute(history, ctx);
  if (out.size() != vocab_size()) fail(ErrorCode::kProviderIo, "provider returned logits of the wrong length");
  return out;
}

double safe_log(double p) {
  static const double kFloor = std::log(std::numeric_limits<double>::min());
  return p > 0.0 ? std::max(std::log(p), kFloor) : kFloor;
}

}  // namespace uadf
