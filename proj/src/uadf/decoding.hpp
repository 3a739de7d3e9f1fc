#pragma once

#include <span>
#include <vector>

#include "uadf/fusion.hpp"
#include "uadf/provider.hpp"

namespace uadf {

enum class Termination { kEos, kMaxLength };

const char* to_string(Termination t);

struct DecodeResult {
  TokenSeq tokens;  // emitted tokens, ending with EOS iff terminated == kEos
  std::vector<FusionStep> fused_steps;  // fused decoding
  std::vector<ProbDist> single_steps;   // single-provider decoding
  Termination terminated = Termination::kMaxLength;
};

// Starts from [BOS] and appends the argmax token until EOS or max_len tokens.
DecodeResult greedy_decode(const LogitProvider& provider, const UtteranceContext& ctx, std::size_t max_len);

// One shared history drives both providers; each step is fused per cfg and
// its argmax appended. A FusionStep is recorded per emitted token.
DecodeResult fused_greedy_decode(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& cfg,
                                 const UtteranceContext& ctx, std::size_t max_len);

struct ScoredHypothesis {
  TokenSeq tokens;  // ends with EOS when complete
  double score = 0.0;  // sum of ln p
  bool complete = false;

  bool operator==(const ScoredHypothesis&) const = default;
};

// Length-unnormalized beam search. Each step keeps the top beam_width
// extensions; those ending in EOS retire into the output pool. Beams still
// alive at max_len join the pool as unterminated hypotheses. Results are
// ordered by score, then lexicographically by token ids.
std::vector<ScoredHypothesis> beam_search(const LogitProvider& provider, const UtteranceContext& ctx,
                                          std::size_t beam_width, std::size_t n_out, std::size_t max_len);

// Word ids of a decoded sequence with EOS removed.
TokenSeq strip_eos(std::span<const TokenId> tokens);

}  // namespace uadf
