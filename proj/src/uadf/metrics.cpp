#include "uadf/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

#include "uadf/error.hpp"

namespace uadf {

ScoreReport& ScoreReport::operator+=(const ScoreReport& other) {
  substitutions += other.substitutions;
  insertions += other.insertions;
  deletions += other.deletions;
  hits += other.hits;
  n_ref_words += other.n_ref_words;
  wer = n_ref_words == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(n_ref_words);
  return *this;
}

ScoreReport wer(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (ref.empty()) fail(ErrorCode::kInvalidInput, "reference is empty");
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  ScoreReport r;
  r.n_ref_words = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      ++r.hits, --i, --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      ++r.substitutions, --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++r.deletions, --i;
    } else {
      ++r.insertions, --j;
    }
  }
  r.wer = static_cast<double>(r.errors()) / static_cast<double>(n);
  return r;
}

ScoreReport wer(const std::string& hypothesis, const std::string& reference) {
  const auto h = split_words(hypothesis);
  const auto r = split_words(reference);
  return wer(h, r);
}

ScoreReport wer(const std::string& hypothesis, const std::string& reference, const Normalizer& normalize) {
  const auto h = normalize(hypothesis);
  const auto r = normalize(reference);
  return wer(h, r);
}

Normalization parse_normalization(const std::string& s) {
  if (s == "lowercase") return Normalization::kLowercase;
  if (s == "strip-punctuation") return Normalization::kStripPunctuation;
  fail(ErrorCode::kConfiguration, "unknown normalization '" + s + "' (expected lowercase or strip-punctuation)");
}

const char* to_string(Normalization n) {
  return n == Normalization::kLowercase ? "lowercase" : "strip-punctuation";
}

Normalizer make_normalizer(Normalization n) {
  if (n == Normalization::kLowercase) return [](std::string_view text) { return split_words(text); };
  return [](std::string_view text) {
    std::string kept;
    for (char c : text) {
      // apostrophes stay, so contractions remain one word
      if (!std::ispunct(static_cast<unsigned char>(c)) || c == '\'') kept += c;
    }
    return split_words(kept);
  };
}

double werr(double wer_baseline, double wer_new) {
  if (!(wer_baseline > 0.0)) fail(ErrorCode::kInvalidParameter, "baseline WER must be positive");
  return (wer_baseline - wer_new) / wer_baseline;
}

ScoreReport oracle_nbest(std::span<const Words> nbest, std::span<const std::string> reference) {
  if (nbest.empty()) fail(ErrorCode::kInvalidInput, "N-best list is empty");
  ScoreReport best = wer(nbest[0], reference);
  for (std::size_t k = 1; k < nbest.size(); ++k) {
    auto r = wer(nbest[k], reference);
    if (r.errors() < best.errors()) best = r;
  }
  return best;
}

namespace {

bool slot_has(const ConfusionSlot& slot, const std::string& w) {
  return std::find(slot.words.begin(), slot.words.end(), w) != slot.words.end();
}

void merge_hypothesis(std::vector<ConfusionSlot>& slots, const Words& hyp) {
  const std::size_t n = slots.size();
  const std::size_t m = hyp.size();
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 2;
  std::vector<std::size_t> cost((n + 1) * (m + 1), kInf);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  auto skip_cost = [&](std::size_t i) -> std::size_t { return slots[i].has_epsilon ? 0 : 1; };
  auto match_cost = [&](std::size_t i, std::size_t j) -> std::size_t { return slot_has(slots[i], hyp[j]) ? 0 : 1; };
  at(0, 0) = 0;
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      std::size_t best = kInf;
      if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1) + match_cost(i - 1, j - 1));
      if (i > 0) best = std::min(best, at(i - 1, j) + skip_cost(i - 1));
      if (j > 0) best = std::min(best, at(i, j - 1) + 1);
      at(i, j) = best;
    }
  }
  enum class Move { kMatch, kSkip, kInsert };
  std::vector<Move> moves;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + match_cost(i - 1, j - 1)) {
      moves.push_back(Move::kMatch), --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + skip_cost(i - 1)) {
      moves.push_back(Move::kSkip), --i;
    } else {
      moves.push_back(Move::kInsert), --j;
    }
  }
  std::reverse(moves.begin(), moves.end());
  std::vector<ConfusionSlot> merged;
  merged.reserve(n + m);
  i = 0, j = 0;
  for (Move mv : moves) {
    switch (mv) {
      case Move::kMatch: {
        ConfusionSlot s = std::move(slots[i++]);
        if (!slot_has(s, hyp[j])) s.words.push_back(hyp[j]);
        ++j;
        merged.push_back(std::move(s));
        break;
      }
      case Move::kSkip: {
        ConfusionSlot s = std::move(slots[i++]);
        s.has_epsilon = true;
        merged.push_back(std::move(s));
        break;
      }
      case Move::kInsert: {
        merged.push_back(ConfusionSlot{{hyp[j++]}, true, std::nullopt});
        break;
      }
    }
  }
  slots = std::move(merged);
}

}  // namespace

std::vector<ConfusionSlot> build_confusion_network(std::span<const Words> nbest) {
  if (nbest.empty()) fail(ErrorCode::kInvalidInput, "N-best list is empty");
  std::vector<ConfusionSlot> slots;
  for (const auto& w : nbest[0]) slots.push_back(ConfusionSlot{{w}, false, w});
  for (std::size_t k = 1; k < nbest.size(); ++k) merge_hypothesis(slots, nbest[k]);
  return slots;
}

Words oracle_path(std::span<const ConfusionSlot> slots, std::span<const std::string> ref) {
  const std::size_t n = slots.size();
  const std::size_t m = ref.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  auto skip_cost = [&](std::size_t i) -> std::size_t { return slots[i].has_epsilon ? 0 : 1; };
  auto match_cost = [&](std::size_t i, std::size_t j) -> std::size_t { return slot_has(slots[i], ref[j]) ? 0 : 1; };
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) {
        at(0, 0) = 0;
        continue;
      }
      std::size_t best = std::numeric_limits<std::size_t>::max();
      if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1) + match_cost(i - 1, j - 1));
      if (i > 0) best = std::min(best, at(i - 1, j) + skip_cost(i - 1));
      if (j > 0) best = std::min(best, at(i, j - 1) + 1);
      at(i, j) = best;
    }
  }
  Words path;
  auto fallback = [&](const ConfusionSlot& s) {
    if (s.has_epsilon) return;
    path.push_back(s.pivot ? *s.pivot : s.words.front());
  };
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + match_cost(i - 1, j - 1)) {
      if (slot_has(slots[i - 1], ref[j - 1])) {
        path.push_back(ref[j - 1]);
      } else {
        fallback(slots[i - 1]);
      }
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + skip_cost(i - 1)) {
      fallback(slots[i - 1]);
      --i;
    } else {
      --j;  // reference word with no slot: deleted on the oracle path
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

ScoreReport oracle_compositional(std::span<const Words> nbest, std::span<const std::string> reference) {
  const auto network = build_confusion_network(nbest);
  return wer(oracle_path(network, reference), reference);
}

std::size_t lm_rescore(std::span<const TokenSeq> nbest, std::span<const std::optional<double>> scores,
                       const NgramModel& lm, double lambda, bool rank_fallback) {
  if (nbest.empty()) fail(ErrorCode::kInvalidInput, "N-best list is empty");
  if (scores.size() != nbest.size()) fail(ErrorCode::kInvalidInput, "one acoustic score per hypothesis is required");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nbest.size(); ++k) {
    double acoustic = 0.0;
    if (scores[k]) {
      acoustic = *scores[k];
    } else if (rank_fallback) {
      acoustic = -static_cast<double>(k);
    } else {
      fail(ErrorCode::kInvalidInput, "hypothesis " + std::to_string(k) + " has no acoustic score");
    }
    const double lm_score = lambda == 0.0 ? 0.0 : lm.sentence_log_prob(nbest[k]);
    const double total = (1.0 - lambda) * acoustic + lambda * lm_score;
    if (k == 0 || total > best_score) {
      best = k;
      best_score = total;
    }
  }
  return best;
}

}  // namespace uadf
