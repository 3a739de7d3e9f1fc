#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uadf/ngram.hpp"

namespace uadf {

using Words = std::vector<std::string>;

struct ScoreReport {
  double wer = 0.0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t hits = 0;
  std::size_t n_ref_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  // Accumulates counts and recomputes wer over the pooled reference words.
  ScoreReport& operator+=(const ScoreReport& other);
};

// Unit-cost Levenshtein alignment. Among optimal alignments the backtrace
// prefers hit, then substitution, then deletion, then insertion.
ScoreReport wer(std::span<const std::string> hypothesis, std::span<const std::string> reference);
ScoreReport wer(const std::string& hypothesis, const std::string& reference);

// Turns a transcript into scoring words. The default, split_words, lowercases
// and splits on whitespace; external data may need punctuation stripped too.
using Normalizer = std::function<Words(std::string_view)>;
enum class Normalization { kLowercase, kStripPunctuation };
Normalization parse_normalization(const std::string& s);
const char* to_string(Normalization n);
Normalizer make_normalizer(Normalization n);

ScoreReport wer(const std::string& hypothesis, const std::string& reference, const Normalizer& normalize);

// (baseline - new) / baseline.
double werr(double wer_baseline, double wer_new);

// Best single hypothesis.
ScoreReport oracle_nbest(std::span<const Words> nbest, std::span<const std::string> reference);

// Slot-aligned lattice built by merging hypotheses onto the first one.
// Each slot holds the distinct words the hypotheses put there and whether
// some hypothesis skipped it.
struct ConfusionSlot {
  std::vector<std::string> words;
  bool has_epsilon = false;
  std::optional<std::string> pivot;  // the first hypothesis's word, if it had one here
};

std::vector<ConfusionSlot> build_confusion_network(std::span<const Words> nbest);

// Best path through the confusion network: the reference is aligned against
// the slots, each slot then contributes the reference word when it holds it,
// otherwise epsilon when available, otherwise its pivot word.
Words oracle_path(std::span<const ConfusionSlot> network, std::span<const std::string> reference);

ScoreReport oracle_compositional(std::span<const Words> nbest, std::span<const std::string> reference);

// Picks argmax of (1 - lambda) acoustic + lambda lm_logprob; ties go to the
// earlier rank. Missing acoustic scores are an error unless `rank_fallback`
// is set, in which case hypothesis i scores -i.
std::size_t lm_rescore(std::span<const TokenSeq> nbest, std::span<const std::optional<double>> scores,
                       const NgramModel& lm, double lambda, bool rank_fallback = false);

}  // namespace uadf
