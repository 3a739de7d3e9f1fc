#include "uadf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uadf/error.hpp"
#include "uadf/parallel.hpp"
#include "uadf/wire.hpp"

namespace uadf {

std::size_t decode_max_len(const CorpusRecord& record, const DecodeOptions& options) {
  const auto n = split_words(record.reference).size();
  if (n == 0) return options.free_max_len;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(options.max_len_factor * static_cast<double>(n))));
}

std::vector<UtteranceDecode> decode_corpus(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& cfg,
                                           std::span<const CorpusRecord> records, const DecodeOptions& options) {
  validate(cfg);
  const auto& vocab = llm.vocabulary_ptr();
  std::vector<UtteranceDecode> out(records.size());
  parallel_for(records.size(), options.workers, [&](std::size_t i) {
    const auto ctx = record_context(records[i], vocab);
    auto result = fused_greedy_decode(llm, asr, cfg, ctx, decode_max_len(records[i], options));
    UtteranceDecode& d = out[i];
    d.id = records[i].id;
    d.hypothesis = vocab->decode(result.tokens);
    d.tokens = std::move(result.tokens);
    d.terminated = result.terminated;
    if (options.keep_steps) d.steps = std::move(result.fused_steps);
  });
  return out;
}

std::string hypothesis_line(const UtteranceDecode& decode) {
  nlohmann::ordered_json doc;
  doc["id"] = decode.id;
  doc["hypothesis"] = decode.hypothesis;
  doc["terminated"] = to_string(decode.terminated);
  return doc.dump();
}

void save_hypotheses(std::span<const UtteranceDecode> decodes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& d : decodes) out << hypothesis_line(d) << '\n';
}

std::vector<HypothesisRecord> load_hypotheses(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open hypothesis file " + path.string());
  std::vector<HypothesisRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kParse, where + ": " + e.what());
    }
    if (!doc.is_object()) fail(ErrorCode::kParse, where + ": record is not an object");
    for (const char* field : {"id", "hypothesis"}) {
      if (!doc.contains(field) || !doc[field].is_string()) {
        fail(ErrorCode::kSchema, where + ": missing string field '" + field + "'");
      }
    }
    out.push_back({doc["id"].get<std::string>(), doc["hypothesis"].get<std::string>(), doc.value("terminated", "")});
  }
  return out;
}

namespace {

nlohmann::ordered_json top_tokens(const ProbDist& p, const Vocabulary& vocab, std::size_t k) {
  std::vector<TokenId> ids(p.size());
  for (TokenId i = 0; i < ids.size(); ++i) ids[i] = i;
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](TokenId a, TokenId b) {
    return p[a] != p[b] ? p[a] > p[b] : a < b;
  });
  auto out = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < k; ++i) out.push_back({vocab.token(ids[i]), p[ids[i]]});
  return out;
}

}  // namespace

void write_step_log(std::span<const UtteranceDecode> decodes, const Vocabulary& vocabulary, std::ostream& out) {
  for (const auto& d : decodes) {
    for (std::size_t t = 0; t < d.steps.size(); ++t) {
      const auto& s = d.steps[t];
      nlohmann::ordered_json doc;
      doc["id"] = d.id;
      doc["step"] = t;
      doc["u"] = s.uncertainty;
      doc["w"] = s.w_asr_effective;
      doc["llm_top"] = top_tokens(s.p_llm, vocabulary, 3);
      doc["asr_top"] = top_tokens(s.p_asr, vocabulary, 3);
      doc["chosen"] = vocabulary.token(s.chosen);
      out << doc.dump() << '\n';
    }
  }
}

double corpus_wer(std::span<const UtteranceDecode> decodes, std::span<const CorpusRecord> records) {
  if (decodes.size() != records.size()) fail(ErrorCode::kInvalidInput, "decode and record counts differ");
  ScoreReport total;
  for (std::size_t i = 0; i < records.size(); ++i) total += wer(decodes[i].hypothesis, records[i].reference);
  return total.wer;
}

GridResult grid_search_static(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& base,
                              std::span<const CorpusRecord> records, const StaticGrid& grid,
                              const DecodeOptions& options) {
  if (records.empty()) fail(ErrorCode::kInvalidInput, "grid search needs a non-empty validation set");
  GridResult result;
  FusionConfig cfg = base;
  cfg.mode = FusionMode::kStatic;
  for (double wl : grid.w_llm) {
    for (double wa : grid.w_asr) {
      if (wl == 0.0 && wa == 0.0) continue;
      cfg.w_llm = wl;
      cfg.w_asr = wa;
      validate(cfg);
      result.table.push_back({wl, wa, corpus_wer(decode_corpus(llm, asr, cfg, records, options), records)});
    }
  }
  if (result.table.empty()) fail(ErrorCode::kInvalidParameter, "static grid is empty");
  result.best = result.table.front();
  for (const auto& p : result.table) {
    if (p.wer < result.best.wer || (p.wer == result.best.wer && p.w_asr < result.best.w_asr)) result.best = p;
  }
  return result;
}

std::vector<BetaPoint> sweep_beta(const LogitProvider& llm, const LogitProvider& asr, const FusionConfig& base,
                                  std::span<const CorpusRecord> records, std::span<const double> betas,
                                  const DecodeOptions& options) {
  std::vector<BetaPoint> out;
  FusionConfig cfg = base;
  cfg.mode = FusionMode::kUadf;
  for (double b : betas) {
    cfg.beta = b;
    out.push_back({b, corpus_wer(decode_corpus(llm, asr, cfg, records, options), records)});
  }
  return out;
}

std::string grid_to_csv(std::span<const GridPoint> table) {
  std::string out = "w_llm,w_asr,wer\n";
  for (const auto& p : table) out += format_double(p.w_llm) + "," + format_double(p.w_asr) + "," + format_double(p.wer) + "\n";
  return out;
}

std::string beta_to_csv(std::span<const BetaPoint> table) {
  std::string out = "beta,wer\n";
  for (const auto& p : table) out += format_double(p.beta) + "," + format_double(p.wer) + "\n";
  return out;
}

OracleReport score_oracles(std::span<const CorpusRecord> records, const Vocabulary& vocabulary, const NgramModel* lm,
                           double lm_lambda, const Normalizer& normalize) {
  OracleReport report;
  if (lm) report.lm_rank.emplace();
  for (const auto& r : records) {
    if (r.nbest.empty()) continue;
    const auto ref = normalize(r.reference);
    std::vector<Words> hyps;
    for (const auto& h : r.nbest) hyps.push_back(normalize(h.text));
    report.one_best += wer(hyps.front(), ref);
    report.nbest += oracle_nbest(hyps, ref);
    report.compositional += oracle_compositional(hyps, ref);
    if (lm) {
      std::vector<TokenSeq> ids;
      std::vector<std::optional<double>> scores;
      bool all_scored = true;
      for (const auto& h : r.nbest) {
        ids.push_back(vocabulary.encode(h.text));
        scores.push_back(h.score);
        all_scored = all_scored && h.score.has_value();
      }
      const auto pick = lm_rescore(ids, scores, *lm, lm_lambda, !all_scored);
      *report.lm_rank += wer(hyps[pick], ref);
    }
  }
  return report;
}

namespace {

nlohmann::ordered_json report_json(const ScoreReport& r) {
  nlohmann::ordered_json doc;
  doc["wer"] = r.wer;
  doc["substitutions"] = r.substitutions;
  doc["insertions"] = r.insertions;
  doc["deletions"] = r.deletions;
  doc["hits"] = r.hits;
  doc["n_ref_words"] = r.n_ref_words;
  return doc;
}

}  // namespace

nlohmann::ordered_json score_document(std::span<const CorpusRecord> records,
                                      const std::vector<std::pair<std::string, std::vector<HypothesisRecord>>>& systems,
                                      const std::string& baseline, const std::optional<OracleReport>& oracles,
                                      const Normalizer& normalize) {
  std::vector<std::pair<std::string, ScoreReport>> totals;
  for (const auto& [name, hyps] : systems) {
    std::map<std::string, const HypothesisRecord*> by_id;
    for (const auto& h : hyps) by_id[h.id] = &h;
    ScoreReport total;
    for (const auto& r : records) {
      auto it = by_id.find(r.id);
      if (it == by_id.end()) fail(ErrorCode::kSchema, "system '" + name + "' has no hypothesis for '" + r.id + "'");
      total += wer(it->second->hypothesis, r.reference, normalize);
    }
    totals.emplace_back(name, total);
  }
  const auto base = std::find_if(totals.begin(), totals.end(), [&](const auto& t) { return t.first == baseline; });
  if (!baseline.empty() && base == totals.end()) fail(ErrorCode::kConfiguration, "baseline '" + baseline + "' is not among the systems");

  nlohmann::ordered_json doc;
  doc["n_utterances"] = records.size();
  doc["baseline"] = baseline;
  auto sys = nlohmann::ordered_json::object();
  for (const auto& [name, total] : totals) {
    auto entry = report_json(total);
    if (base != totals.end() && base->second.wer > 0.0) {
      entry["werr"] = werr(base->second.wer, total.wer);
    } else {
      entry["werr"] = nullptr;
    }
    sys[name] = std::move(entry);
  }
  doc["systems"] = std::move(sys);
  if (oracles && oracles->one_best.n_ref_words > 0) {
    nlohmann::ordered_json o;
    o["one_best"] = report_json(oracles->one_best);
    o["o_nb"] = report_json(oracles->nbest);
    o["o_cp"] = report_json(oracles->compositional);
    if (oracles->lm_rank) o["lm_rank"] = report_json(*oracles->lm_rank);
    doc["oracles"] = std::move(o);
  }
  return doc;
}

}  // namespace uadf
