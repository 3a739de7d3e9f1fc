#include "uadf/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "uadf/error.hpp"

namespace uadf {

const char* to_string(Termination t) { return t == Termination::kEos ? "eos" : "max-length"; }

DecodeResult greedy_decode(const LogitProvider& provider, const UtteranceContext& ctx, std::size_t max_len) {
  if (max_len < 1) fail(ErrorCode::kInvalidParameter, "max_len must be >= 1");
  DecodeResult out;
  TokenSeq history{kBos};
  while (out.tokens.size() < max_len) {
    const auto logits = provider.next_logits(history, ctx);
    const TokenId next = argmax_token(logits);
    out.single_steps.push_back(softmax_with_temperature(logits, 1.0));
    out.tokens.push_back(next);
    history.push_back(next);
    if (next == kEos) {
      out.terminated = Termination::kEos;
      break;
    }
  }
  return out;
}

DecodeResult fused_greedy_decode(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& cfg,
                                 const UtteranceContext& ctx, std::size_t max_len) {
  if (max_len < 1) fail(ErrorCode::kInvalidParameter, "max_len must be >= 1");
  if (!same_vocabulary(llm.vocabulary(), asr.vocabulary())) {
    fail(ErrorCode::kConfiguration, "fused providers do not share a vocabulary");
  }
  validate(cfg);
  DecodeResult out;
  TokenSeq history{kBos};
  while (out.tokens.size() < max_len) {
    const auto l = llm.next_logits(history, ctx);
    const auto a = asr.next_logits(history, ctx);
    auto step = fuse(l, a, cfg);
    const TokenId next = step.chosen;
    out.fused_steps.push_back(std::move(step));
    out.tokens.push_back(next);
    history.push_back(next);
    if (next == kEos) {
      out.terminated = Termination::kEos;
      break;
    }
  }
  return out;
}

namespace {

bool ranks_before(const ScoredHypothesis& a, const ScoredHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<ScoredHypothesis> beam_search(const LogitProvider& provider, const UtteranceContext& ctx,
                                          std::size_t beam_width, std::size_t n_out, std::size_t max_len) {
  if (n_out < 1 || beam_width < n_out) fail(ErrorCode::kInvalidParameter, "beam search needs beam_width >= n_out >= 1");
  if (max_len < 1) fail(ErrorCode::kInvalidParameter, "max_len must be >= 1");
  std::vector<ScoredHypothesis> live{ScoredHypothesis{}};
  std::vector<ScoredHypothesis> pool;
  std::vector<ScoredHypothesis> candidates;
  TokenSeq history;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    if (pool.size() >= n_out) {
      std::sort(pool.begin(), pool.end(), ranks_before);
      const double best_live =
          std::max_element(live.begin(), live.end(), [](const auto& a, const auto& b) { return a.score < b.score; })->score;
      if (best_live < pool[n_out - 1].score) break;
    }
    candidates.clear();
    for (const auto& beam : live) {
      history.assign(1, kBos);
      history.insert(history.end(), beam.tokens.begin(), beam.tokens.end());
      const auto p = softmax_with_temperature(provider.next_logits(history, ctx), 1.0);
      for (TokenId v = 0; v < p.size(); ++v) {
        ScoredHypothesis c{beam.tokens, beam.score + std::log(p[v]), v == kEos};
        c.tokens.push_back(v);
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      ranks_before);
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].complete) {
        pool.push_back(std::move(candidates[i]));
      } else {
        live.push_back(std::move(candidates[i]));
      }
    }
    if (step + 1 == max_len) {
      for (auto& beam : live) pool.push_back(std::move(beam));
      live.clear();
    }
  }
  std::sort(pool.begin(), pool.end(), ranks_before);
  if (pool.size() > n_out) pool.resize(n_out);
  return pool;
}

TokenSeq strip_eos(std::span<const TokenId> tokens) {
  TokenSeq out(tokens.begin(), tokens.end());
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

}  // namespace uadf
