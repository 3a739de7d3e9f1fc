#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uadf/prob.hpp"
#include "uadf/vocabulary.hpp"

namespace uadf {

// Everything a provider may condition on besides the decoded history.
// Sequences are stored as plain word ids, without BOS or EOS.
struct UtteranceContext {
  std::string id;
  std::vector<TokenSeq> nbest;
  TokenSeq observation;
  std::shared_ptr<const Vocabulary> vocabulary;
};

// Builds a canonical context: strips a leading BOS and trailing EOS from every sequence.
UtteranceContext make_context(std::string id, std::vector<TokenSeq> nbest, TokenSeq observation,
                              std::shared_ptr<const Vocabulary> vocabulary);

enum class ProviderKind { kNgramCorrector, kAcousticChannel, kExternal, kCallback };

const char* to_string(ProviderKind kind);

// One modality's next-token scorer. Implementations are immutable after
// construction (the external provider serializes its connection internally)
// and next_logits is a pure function of (history, ctx).
class LogitProvider {
 public:
  explicit LogitProvider(std::shared_ptr<const Vocabulary> vocabulary);
  virtual ~LogitProvider() = default;

  LogitProvider(const LogitProvider&) = delete;
  LogitProvider& operator=(const LogitProvider&) = delete;

  virtual ProviderKind kind() const = 0;

  // `history` starts with BOS. Validates the vocabulary match and the history
  // before delegating to compute().
  Logits next_logits(std::span<const TokenId> history, const UtteranceContext& ctx) const;

  const Vocabulary& vocabulary() const { return *vocabulary_; }
  const std::shared_ptr<const Vocabulary>& vocabulary_ptr() const { return vocabulary_; }
  std::size_t vocab_size() const { return vocabulary_->size(); }

 protected:
  virtual Logits compute(std::span<const TokenId> history, const UtteranceContext& ctx) const = 0;

 private:
  std::shared_ptr<const Vocabulary> vocabulary_;
};

bool same_vocabulary(const Vocabulary& a, const Vocabulary& b);

// ln p with zero probabilities mapped onto a finite floor.
double safe_log(double p);

}  // namespace uadf
