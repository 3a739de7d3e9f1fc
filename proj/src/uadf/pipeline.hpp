#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uadf/corpus.hpp"
#include "uadf/decoding.hpp"
#include "uadf/metrics.hpp"

namespace uadf {

struct DecodeOptions {
  double max_len_factor = 2.0;  // max_len = factor x reference length when a reference is known
  std::size_t free_max_len = 64;
  std::size_t workers = 1;
  bool keep_steps = false;
};

std::size_t decode_max_len(const CorpusRecord& record, const DecodeOptions& options);

struct UtteranceDecode {
  std::string id;
  TokenSeq tokens;
  std::string hypothesis;
  Termination terminated = Termination::kMaxLength;
  std::vector<FusionStep> steps;  // only with keep_steps
};

// Decodes every record with fused_greedy_decode; output follows input order.
std::vector<UtteranceDecode> decode_corpus(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& cfg,
                                           std::span<const CorpusRecord> records, const DecodeOptions& options);

// {"id": ..., "hypothesis": ..., "terminated": "eos" | "max-length"}
std::string hypothesis_line(const UtteranceDecode& decode);
void save_hypotheses(std::span<const UtteranceDecode> decodes, const std::filesystem::path& path);

struct HypothesisRecord {
  std::string id;
  std::string hypothesis;
  std::string terminated;
};
std::vector<HypothesisRecord> load_hypotheses(const std::filesystem::path& path);

// One line per step: utterance id, step index, u, w, top-3 LLM and ASR
// tokens with probabilities, chosen token.
void write_step_log(std::span<const UtteranceDecode> decodes, const Vocabulary& vocabulary, std::ostream& out);

double corpus_wer(std::span<const UtteranceDecode> decodes, std::span<const CorpusRecord> records);

struct GridPoint {
  double w_llm = 1.0;
  double w_asr = 0.0;
  double wer = 0.0;
};

struct StaticGrid {
  std::vector<double> w_llm{1.0};
  std::vector<double> w_asr{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.75, 1.0, 1.5, 2.0};
};

struct GridResult {
  GridPoint best;
  std::vector<GridPoint> table;  // grid order
};

// Static-mode decode of `records` at every grid point (pairs with both
// weights zero are skipped). Best = lowest WER; ties go to the smaller w_asr,
// then the earlier point.
GridResult grid_search_static(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& base,
                              std::span<const CorpusRecord> records, const StaticGrid& grid,
                              const DecodeOptions& options);

struct BetaPoint {
  double beta = 0.0;
  double wer = 0.0;
};

std::vector<BetaPoint> sweep_beta(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& base,
                                  std::span<const CorpusRecord> records, std::span<const double> betas,
                                  const DecodeOptions& options);

std::string grid_to_csv(std::span<const GridPoint> table);
std::string beta_to_csv(std::span<const BetaPoint> table);

struct OracleReport {
  ScoreReport one_best;
  ScoreReport nbest;          // o_nb
  ScoreReport compositional;  // o_cp
  std::optional<ScoreReport> lm_rank;
};

// Aggregates the N-best oracles over records that carry hypotheses.
OracleReport score_oracles(std::span<const CorpusRecord> records, const Vocabulary& vocabulary, const NgramModel* lm,
                           double lm_lambda, const Normalizer& normalize = split_words);

// Scores named hypothesis sets against the corpus. Every record id must have a hypothesis.
// The document lists systems in the given order with wer, werr against `baseline`
// and S/I/D/H totals, plus the oracle block when the corpus has N-best lists.
nlohmann::ordered_json score_document(std::span<const CorpusRecord> records,
                                      const std::vector<std::pair<std::string, std::vector<HypothesisRecord>>>& systems,
                                      const std::string& baseline, const std::optional<OracleReport>& oracles,
                                      const Normalizer& normalize = split_words);

}  // namespace uadf
