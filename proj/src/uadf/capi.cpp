#include "uadf.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>

#include "uadf/calibration.hpp"
#include "uadf/corpus.hpp"
#include "uadf/error.hpp"
#include "uadf/models.hpp"
#include "uadf/pipeline.hpp"
#include "uadf/wire.hpp"

struct uadf_vocab {
  std::shared_ptr<const uadf::Vocabulary> vocab;
};

struct uadf_corpus {
  std::vector<uadf::CorpusRecord> records;
};

struct uadf_provider {
  std::unique_ptr<uadf::LogitProvider> provider;
};

struct uadf_calibration {
  uadf::TraceSet traces;
  uadf::CalibrationReport report;
};

struct uadf_decode_batch {
  std::vector<uadf::UtteranceDecode> decodes;
  std::vector<uadf::CorpusRecord> records;
  std::shared_ptr<const uadf::Vocabulary> vocab;
};

namespace {

thread_local std::string g_last_error;

uadf_status to_status(uadf::ErrorCode code) { return static_cast<uadf_status>(static_cast<int>(code)); }

template <typename Fn>
uadf_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return UADF_OK;
  } catch (const uadf::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return UADF_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UADF_E_INTERNAL;
  }
}

template <typename T>
void require(const T* p, const char* what) {
  if (!p) uadf::fail(uadf::ErrorCode::kInvalidParameter, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

const uadf::CorpusRecord& record_at(const uadf_corpus* corpus, size_t index) {
  require(corpus, "corpus");
  if (index >= corpus->records.size()) uadf::fail(uadf::ErrorCode::kInvalidParameter, "record index out of range");
  return corpus->records[index];
}

uadf::FusionConfig to_config(const uadf_fusion_config* c) {
  require(c, "fusion config");
  uadf::FusionConfig cfg;
  switch (c->mode) {
    case UADF_MODE_LLM: cfg.mode = uadf::FusionMode::kLlmOnly; break;
    case UADF_MODE_ASR: cfg.mode = uadf::FusionMode::kAsrOnly; break;
    case UADF_MODE_STATIC: cfg.mode = uadf::FusionMode::kStatic; break;
    case UADF_MODE_UADF: cfg.mode = uadf::FusionMode::kUadf; break;
    default: uadf::fail(uadf::ErrorCode::kInvalidParameter, "unknown fusion mode");
  }
  switch (c->combine) {
    case UADF_COMBINE_OUTER_SOFTMAX: cfg.combine = uadf::Combine::kOuterSoftmax; break;
    case UADF_COMBINE_RENORMALIZE: cfg.combine = uadf::Combine::kRenormalize; break;
    default: uadf::fail(uadf::ErrorCode::kInvalidParameter, "unknown combine rule");
  }
  switch (c->uncertainty) {
    case UADF_UNCERTAINTY_ENTROPY: cfg.uncertainty = uadf::UncertaintyMeasure::kEntropy; break;
    case UADF_UNCERTAINTY_ARGMAX_TERM: cfg.uncertainty = uadf::UncertaintyMeasure::kArgmaxTerm; break;
    default: uadf::fail(uadf::ErrorCode::kInvalidParameter, "unknown uncertainty measure");
  }
  cfg.w_llm = c->w_llm;
  cfg.w_asr = c->w_asr;
  cfg.tau1 = c->tau1;
  cfg.tau2 = c->tau2;
  cfg.beta = c->beta;
  return cfg;
}

uadf::DecodeOptions to_decode_options(const uadf_decode_options* o) {
  uadf::DecodeOptions out;
  if (!o) return out;
  if (!(o->max_len_factor > 0.0)) uadf::fail(uadf::ErrorCode::kInvalidParameter, "max_len_factor must be positive");
  if (o->free_max_len < 1) uadf::fail(uadf::ErrorCode::kInvalidParameter, "free_max_len must be >= 1");
  out.max_len_factor = o->max_len_factor;
  out.free_max_len = o->free_max_len;
  out.workers = o->workers;
  out.keep_steps = o->keep_steps != 0;
  return out;
}

// Forwards each step to a user function.
class CallbackProvider final : public uadf::LogitProvider {
 public:
  CallbackProvider(std::shared_ptr<const uadf::Vocabulary> vocab, uadf_logits_fn fn, void* user)
      : LogitProvider(std::move(vocab)), fn_(fn), user_(user) {}

  uadf::ProviderKind kind() const override { return uadf::ProviderKind::kCallback; }

 protected:
  uadf::Logits compute(std::span<const uadf::TokenId> history, const uadf::UtteranceContext& ctx) const override {
    std::vector<double> out(vocab_size());
    if (fn_(user_, ctx.id.c_str(), history.data(), history.size(), out.data(), out.size()) != 0) {
      uadf::fail(uadf::ErrorCode::kProviderIo, "logits callback failed for '" + ctx.id + "'");
    }
    for (double x : out) {
      if (!std::isfinite(x)) uadf::fail(uadf::ErrorCode::kProviderIo, "logits callback returned a non-finite value");
    }
    return uadf::Logits(std::move(out));
  }

 private:
  uadf_logits_fn fn_;
  void* user_;
};

std::map<std::string, uadf::UtteranceContext> context_map(const uadf::LogitProvider& provider, const uadf_corpus* corpus) {
  require(corpus, "corpus");
  std::map<std::string, uadf::UtteranceContext> out;
  for (const auto& r : corpus->records) out.emplace(r.id, uadf::record_context(r, provider.vocabulary_ptr()));
  return out;
}

}  // namespace

extern "C" {

const char* uadf_version(void) { return "1.0.0"; }

const char* uadf_status_string(uadf_status status) {
  switch (status) {
    case UADF_OK: return "ok";
    case UADF_E_INVALID_PARAMETER: return "invalid parameter";
    case UADF_E_INVALID_INPUT: return "invalid input";
    case UADF_E_CONFIGURATION: return "configuration error";
    case UADF_E_PROVIDER_IO: return "provider i/o error";
    case UADF_E_PARSE: return "parse error";
    case UADF_E_SCHEMA: return "schema error";
    case UADF_E_IO: return "i/o error";
    case UADF_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* uadf_last_error(void) { return g_last_error.c_str(); }

void uadf_string_free(char* s) { std::free(s); }

uadf_status uadf_softmax(const double* logits, size_t n, double tau, double* out) {
  return guarded([&] {
    require(logits, "logits");
    require(out, "out");
    const auto p = uadf::softmax_with_temperature(std::span<const double>(logits, n), tau);
    std::copy(p.probs().begin(), p.probs().end(), out);
  });
}

uadf_status uadf_entropy(const double* probs, size_t n, double* out) {
  return guarded([&] {
    require(probs, "probs");
    require(out, "out");
    *out = uadf::entropy(uadf::ProbDist(std::vector<double>(probs, probs + n)));
  });
}

uadf_status uadf_argmax(const double* values, size_t n, uadf_token* out) {
  return guarded([&] {
    require(values, "values");
    require(out, "out");
    *out = uadf::argmax_token(std::span<const double>(values, n));
  });
}

uadf_status uadf_weight(double u, double beta, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = uadf::uadf_weight(u, beta);
  });
}

uadf_status uadf_werr(double wer_baseline, double wer_new, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = uadf::werr(wer_baseline, wer_new);
  });
}

uadf_status uadf_wer(const char* hypothesis, const char* reference, uadf_wer_result* out) {
  return guarded([&] {
    require(hypothesis, "hypothesis");
    require(reference, "reference");
    require(out, "out");
    const auto r = uadf::wer(std::string(hypothesis), std::string(reference));
    *out = {r.wer, r.substitutions, r.insertions, r.deletions, r.hits, r.n_ref_words};
  });
}

void uadf_fusion_config_init(uadf_fusion_config* cfg) {
  if (!cfg) return;
  *cfg = {UADF_MODE_UADF, 1.0, 0.0, 1.0, 1.0, 0.5, UADF_COMBINE_OUTER_SOFTMAX, UADF_UNCERTAINTY_ENTROPY};
}

uadf_status uadf_fusion_config_validate(const uadf_fusion_config* cfg) {
  return guarded([&] { uadf::validate(to_config(cfg)); });
}

uadf_status uadf_fuse(const double* logits_llm, const double* logits_asr, size_t n, const uadf_fusion_config* cfg,
                      double* fused, uadf_fusion_info* info) {
  return guarded([&] {
    require(logits_llm, "logits_llm");
    require(logits_asr, "logits_asr");
    const auto c = to_config(cfg);
    uadf::validate(c);
    const auto step = uadf::fuse(uadf::Logits(std::vector<double>(logits_llm, logits_llm + n)),
                                 uadf::Logits(std::vector<double>(logits_asr, logits_asr + n)), c);
    if (fused) std::copy(step.fused.probs().begin(), step.fused.probs().end(), fused);
    if (info) *info = {step.uncertainty, step.w_asr_effective, step.chosen};
  });
}

uadf_status uadf_vocab_load(const char* path, uadf_vocab** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new uadf_vocab{std::make_shared<const uadf::Vocabulary>(uadf::Vocabulary::load(path))};
  });
}

uadf_status uadf_vocab_from_words(const char* const* words, size_t n, uadf_vocab** out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) require(words, "words");
    std::vector<std::string> w;
    for (size_t i = 0; i < n; ++i) {
      require(words[i], "word");
      w.emplace_back(words[i]);
    }
    *out = new uadf_vocab{std::make_shared<const uadf::Vocabulary>(uadf::Vocabulary::from_words(w))};
  });
}

uadf_status uadf_vocab_save(const uadf_vocab* vocab, const char* path) {
  return guarded([&] {
    require(vocab, "vocab");
    require(path, "path");
    vocab->vocab->save(path);
  });
}

size_t uadf_vocab_size(const uadf_vocab* vocab) { return vocab ? vocab->vocab->size() : 0; }

uadf_status uadf_vocab_token(const uadf_vocab* vocab, uadf_token id, const char** out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(out, "out");
    *out = vocab->vocab->token(id).c_str();
  });
}

uadf_status uadf_vocab_id(const uadf_vocab* vocab, const char* word, uadf_token* out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(word, "word");
    require(out, "out");
    *out = vocab->vocab->id(word);
  });
}

uadf_status uadf_vocab_hash(const uadf_vocab* vocab, char out[65]) {
  return guarded([&] {
    require(vocab, "vocab");
    require(out, "out");
    const auto h = vocab->vocab->hash();
    std::memcpy(out, h.c_str(), 65);
  });
}

void uadf_vocab_free(uadf_vocab* vocab) { delete vocab; }

uadf_status uadf_corpus_load(const char* path, const char* mapping_json, uadf_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    uadf::FieldMapping mapping;
    if (mapping_json) {
      try {
        mapping = uadf::FieldMapping::from_json(nlohmann::json::parse(mapping_json));
      } catch (const nlohmann::json::exception& e) {
        uadf::fail(uadf::ErrorCode::kConfiguration, std::string("bad field mapping: ") + e.what());
      }
    }
    *out = new uadf_corpus{uadf::load_corpus(path, mapping)};
  });
}

uadf_status uadf_corpus_save(const uadf_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus, "corpus");
    require(path, "path");
    uadf::save_corpus(corpus->records, path);
  });
}

size_t uadf_corpus_size(const uadf_corpus* corpus) { return corpus ? corpus->records.size() : 0; }

uadf_status uadf_corpus_id(const uadf_corpus* corpus, size_t index, const char** out) {
  return guarded([&] {
    require(out, "out");
    *out = record_at(corpus, index).id.c_str();
  });
}

uadf_status uadf_corpus_reference(const uadf_corpus* corpus, size_t index, const char** out) {
  return guarded([&] {
    require(out, "out");
    *out = record_at(corpus, index).reference.c_str();
  });
}

uadf_status uadf_corpus_observation(const uadf_corpus* corpus, size_t index, const char** out) {
  return guarded([&] {
    require(out, "out");
    *out = record_at(corpus, index).observation.c_str();
  });
}

uadf_status uadf_corpus_nbest_size(const uadf_corpus* corpus, size_t index, size_t* out) {
  return guarded([&] {
    require(out, "out");
    *out = record_at(corpus, index).nbest.size();
  });
}

uadf_status uadf_corpus_nbest_text(const uadf_corpus* corpus, size_t index, size_t rank, const char** out) {
  return guarded([&] {
    require(out, "out");
    const auto& r = record_at(corpus, index);
    if (rank >= r.nbest.size()) uadf::fail(uadf::ErrorCode::kInvalidParameter, "hypothesis rank out of range");
    *out = r.nbest[rank].text.c_str();
  });
}

void uadf_corpus_free(uadf_corpus* corpus) { delete corpus; }

void uadf_generate_options_init(uadf_generate_options* options) {
  if (!options) return;
  const uadf::GenerationOptions d;
  *options = {d.n_train,
              d.n_val,
              d.n_test,
              d.mean_length,
              d.channel.substitution,
              d.channel.deletion,
              d.channel.insertion,
              d.channel.concentration,
              d.channel.seed,
              d.acoustic.diag_min,
              d.acoustic.diag_max,
              d.acoustic.floor,
              d.beam,
              d.n_best,
              d.cluster_size,
              d.workers,
              nullptr,
              nullptr};
}

namespace {

uadf::GenerationOptions to_generation(const uadf_generate_options* o) {
  require(o, "options");
  uadf::GenerationOptions g;
  g.n_train = o->n_train;
  g.n_val = o->n_val;
  g.n_test = o->n_test;
  g.mean_length = o->mean_length;
  g.channel.substitution = o->substitution;
  g.channel.deletion = o->deletion;
  g.channel.insertion = o->insertion;
  g.channel.concentration = o->concentration;
  g.channel.seed = o->seed;
  g.acoustic.diag_min = o->diag_min;
  g.acoustic.diag_max = o->diag_max;
  g.acoustic.floor = o->floor;
  g.beam = o->beam;
  g.n_best = o->n_best;
  g.cluster_size = o->cluster_size;
  g.workers = o->workers;
  return g;
}

}  // namespace

uadf_status uadf_generate(const uadf_generate_options* options, uadf_vocab** vocab, uadf_corpus** train,
                          uadf_corpus** val, uadf_corpus** test, uadf_provider** acoustic) {
  return guarded([&] {
    const auto g = to_generation(options);
    require(vocab, "vocab");
    require(train, "train");
    require(val, "val");
    require(test, "test");
    require(acoustic, "acoustic");
    uadf::ReferenceSource source = options->grammar_path ? uadf::ReferenceSource::from_grammar_file(options->grammar_path)
                                   : options->text_path  ? uadf::ReferenceSource::from_text_file(options->text_path)
                                                         : uadf::ReferenceSource::builtin();
    auto c = uadf::generate_corpus(source, g);
    auto v = std::make_unique<uadf_vocab>(uadf_vocab{c.vocabulary});
    auto tr = std::make_unique<uadf_corpus>(uadf_corpus{std::move(c.train)});
    auto va = std::make_unique<uadf_corpus>(uadf_corpus{std::move(c.val)});
    auto te = std::make_unique<uadf_corpus>(uadf_corpus{std::move(c.test)});
    auto ac = std::make_unique<uadf_provider>(uadf_provider{std::move(c.acoustic)});
    *vocab = v.release();
    *train = tr.release();
    *val = va.release();
    *test = te.release();
    *acoustic = ac.release();
  });
}

uadf_status uadf_generate_options_json(const uadf_generate_options* options, char** out) {
  return guarded([&] {
    require(out, "out");
    const auto g = to_generation(options);
    nlohmann::ordered_json doc;
    doc["source"] = options->grammar_path ? std::string(options->grammar_path)
                    : options->text_path  ? std::string(options->text_path)
                                          : std::string("builtin");
    doc["n_train"] = g.n_train;
    doc["n_val"] = g.n_val;
    doc["n_test"] = g.n_test;
    doc["mean_length"] = g.mean_length;
    doc["channel"] = g.channel.to_json();
    doc["acoustic"] = g.acoustic.to_json();
    doc["beam"] = g.beam;
    doc["n_best"] = g.n_best;
    doc["cluster_size"] = g.cluster_size;
    *out = dup_string(doc.dump(2));
  });
}

uadf_status uadf_provider_train_corrector(const uadf_vocab* vocab, const uadf_corpus* train, int order,
                                          double smoothing, double vote_weight, uadf_provider** out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(train, "train");
    require(out, "out");
    if (order < 1) uadf::fail(uadf::ErrorCode::kInvalidParameter, "n-gram order must be >= 1");
    const auto pairs = uadf::to_training_pairs(train->records, *vocab->vocab);
    *out = new uadf_provider{uadf::train_ngram_corrector(vocab->vocab, pairs, {order, smoothing, vote_weight})};
  });
}

uadf_status uadf_provider_load(const uadf_vocab* vocab, const char* path, uadf_provider** out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(path, "path");
    require(out, "out");
    *out = new uadf_provider{uadf::load_provider(path, vocab->vocab)};
  });
}

uadf_status uadf_provider_connect(const uadf_vocab* vocab, const char* endpoint, int timeout_ms, uadf_provider** out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(endpoint, "endpoint");
    require(out, "out");
    if (timeout_ms <= 0) uadf::fail(uadf::ErrorCode::kInvalidParameter, "timeout must be positive");
    *out = new uadf_provider{uadf::connect_external(vocab->vocab, endpoint, std::chrono::milliseconds(timeout_ms))};
  });
}

uadf_status uadf_provider_from_callback(const uadf_vocab* vocab, uadf_logits_fn fn, void* user, uadf_provider** out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(out, "out");
    if (!fn) uadf::fail(uadf::ErrorCode::kInvalidParameter, "callback is NULL");
    *out = new uadf_provider{std::make_unique<CallbackProvider>(vocab->vocab, fn, user)};
  });
}

uadf_status uadf_provider_save(const uadf_provider* provider, const char* path) {
  return guarded([&] {
    require(provider, "provider");
    require(path, "path");
    if (auto* p = dynamic_cast<const uadf::NgramCorrector*>(provider->provider.get())) {
      p->save(path);
    } else if (auto* a = dynamic_cast<const uadf::AcousticChannel*>(provider->provider.get())) {
      a->save(path);
    } else {
      uadf::fail(uadf::ErrorCode::kConfiguration, std::string(to_string(provider->provider->kind())) +
                                                      " providers have no model file");
    }
  });
}

const char* uadf_provider_kind(const uadf_provider* provider) {
  return provider ? uadf::to_string(provider->provider->kind()) : "";
}

uadf_status uadf_provider_next_logits(const uadf_provider* provider, const uadf_corpus* corpus, size_t index,
                                      const uadf_token* history, size_t history_len, double* logits) {
  return guarded([&] {
    require(provider, "provider");
    require(history, "history");
    require(logits, "logits");
    const auto ctx = uadf::record_context(record_at(corpus, index), provider->provider->vocabulary_ptr());
    const auto out = provider->provider->next_logits(std::span<const uadf_token>(history, history_len), ctx);
    std::copy(out.values().begin(), out.values().end(), logits);
  });
}

void uadf_provider_free(uadf_provider* provider) { delete provider; }

uadf_status uadf_serve_stdio(const uadf_provider* provider, const uadf_corpus* corpus) {
  return guarded([&] {
    require(provider, "provider");
    const auto contexts = context_map(*provider->provider, corpus);
    uadf::LineChannel channel(0, 1);
    uadf::serve_provider(*provider->provider, contexts, channel);
  });
}

uadf_status uadf_serve_tcp(const uadf_provider* provider, const uadf_corpus* corpus, int port, size_t max_connections) {
  return guarded([&] {
    require(provider, "provider");
    const auto contexts = context_map(*provider->provider, corpus);
    uadf::serve_provider_tcp(*provider->provider, contexts, port, max_connections);
  });
}

void uadf_fit_options_init(uadf_fit_options* options) {
  if (!options) return;
  const uadf::FitOptions d;
  *options = {d.tol, d.tau_min, d.tau_max, d.max_iter, d.n_bins, 1};
}

uadf_status uadf_calibrate(const uadf_provider* provider, const uadf_corpus* val, const uadf_fit_options* options,
                           uadf_calibration** out) {
  return guarded([&] {
    require(provider, "provider");
    require(val, "val");
    require(out, "out");
    uadf::FitOptions fit;
    std::size_t workers = 1;
    if (options) {
      fit = {options->tol, options->tau_min, options->tau_max, options->max_iter, options->n_bins};
      workers = options->workers;
    }
    const auto utterances = uadf::to_utterances(val->records, provider->provider->vocabulary_ptr());
    auto cal = std::make_unique<uadf_calibration>();
    cal->traces = uadf::collect_traces(*provider->provider, utterances, workers);
    cal->report = uadf::fit_temperature(cal->traces, fit);
    *out = cal.release();
  });
}

uadf_status uadf_calibration_summary_get(const uadf_calibration* cal, uadf_calibration_summary* out) {
  return guarded([&] {
    require(cal, "calibration");
    require(out, "out");
    const auto& r = cal->report;
    const int clamp = r.clamped == uadf::Clamp::kLower ? -1 : r.clamped == uadf::Clamp::kUpper ? 1 : 0;
    *out = {r.tau, r.mean_confidence, r.ter, r.n_dec, r.ece, clamp, r.iterations, r.uncalibrated_confidence,
            r.uncalibrated_ece};
  });
}

uadf_status uadf_calibration_to_json(const uadf_calibration* cal, char** out) {
  return guarded([&] {
    require(cal, "calibration");
    require(out, "out");
    *out = dup_string(cal->report.to_json().dump(2));
  });
}

uadf_status uadf_calibration_reliability_csv(const uadf_calibration* cal, double tau, size_t n_bins, char** out) {
  return guarded([&] {
    require(cal, "calibration");
    require(out, "out");
    const auto rel = uadf::reliability_bins(cal->traces, tau, n_bins);
    *out = dup_string(uadf::bins_to_csv(rel.bins));
  });
}

void uadf_calibration_free(uadf_calibration* cal) { delete cal; }

uadf_status uadf_calibration_report_tau(const char* report_path, double* tau) {
  return guarded([&] {
    require(report_path, "report_path");
    require(tau, "tau");
    std::ifstream in(report_path, std::ios::binary);
    if (!in) uadf::fail(uadf::ErrorCode::kIo, std::string("cannot open calibration report ") + report_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      uadf::fail(uadf::ErrorCode::kParse, std::string(report_path) + ": " + e.what());
    }
    *tau = uadf::CalibrationReport::from_json(doc).tau;
  });
}

void uadf_decode_options_init(uadf_decode_options* options) {
  if (!options) return;
  const uadf::DecodeOptions d;
  *options = {d.max_len_factor, d.free_max_len, d.workers, d.keep_steps ? 1 : 0};
}

uadf_status uadf_decode(const uadf_provider* llm, const uadf_provider* asr, const uadf_fusion_config* cfg,
                        const uadf_corpus* corpus, const uadf_decode_options* options, uadf_decode_batch** out) {
  return guarded([&] {
    require(llm, "llm");
    require(asr, "asr");
    require(corpus, "corpus");
    require(out, "out");
    auto batch = std::make_unique<uadf_decode_batch>();
    batch->decodes = uadf::decode_corpus(*llm->provider, *asr->provider, to_config(cfg), corpus->records,
                                         to_decode_options(options));
    batch->records = corpus->records;
    batch->vocab = llm->provider->vocabulary_ptr();
    *out = batch.release();
  });
}

size_t uadf_decode_batch_size(const uadf_decode_batch* batch) { return batch ? batch->decodes.size() : 0; }

namespace {

const uadf::UtteranceDecode& decode_at(const uadf_decode_batch* batch, size_t index) {
  require(batch, "batch");
  if (index >= batch->decodes.size()) uadf::fail(uadf::ErrorCode::kInvalidParameter, "decode index out of range");
  return batch->decodes[index];
}

}  // namespace

uadf_status uadf_decode_batch_hypothesis(const uadf_decode_batch* batch, size_t index, const char** out) {
  return guarded([&] {
    require(out, "out");
    *out = decode_at(batch, index).hypothesis.c_str();
  });
}

uadf_status uadf_decode_batch_tokens(const uadf_decode_batch* batch, size_t index, const uadf_token** tokens, size_t* n) {
  return guarded([&] {
    require(tokens, "tokens");
    require(n, "n");
    const auto& d = decode_at(batch, index);
    *tokens = d.tokens.data();
    *n = d.tokens.size();
  });
}

uadf_status uadf_decode_batch_terminated(const uadf_decode_batch* batch, size_t index, int* eos) {
  return guarded([&] {
    require(eos, "eos");
    *eos = decode_at(batch, index).terminated == uadf::Termination::kEos ? 1 : 0;
  });
}

uadf_status uadf_decode_batch_wer(const uadf_decode_batch* batch, double* out) {
  return guarded([&] {
    require(batch, "batch");
    require(out, "out");
    *out = uadf::corpus_wer(batch->decodes, batch->records);
  });
}

uadf_status uadf_decode_batch_save(const uadf_decode_batch* batch, const char* path) {
  return guarded([&] {
    require(batch, "batch");
    require(path, "path");
    uadf::save_hypotheses(batch->decodes, path);
  });
}

uadf_status uadf_decode_batch_save_steps(const uadf_decode_batch* batch, const char* path) {
  return guarded([&] {
    require(batch, "batch");
    require(path, "path");
    for (const auto& d : batch->decodes) {
      if (!d.tokens.empty() && d.steps.empty()) {
        uadf::fail(uadf::ErrorCode::kInvalidParameter, "batch was decoded without keep_steps");
      }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) uadf::fail(uadf::ErrorCode::kIo, std::string("cannot write ") + path);
    uadf::write_step_log(batch->decodes, *batch->vocab, out);
  });
}

void uadf_decode_batch_free(uadf_decode_batch* batch) { delete batch; }

uadf_status uadf_sweep_static(const uadf_provider* llm, const uadf_provider* asr, const uadf_fusion_config* base,
                              const uadf_corpus* corpus, const double* w_llm, size_t n_llm, const double* w_asr,
                              size_t n_asr, const uadf_decode_options* options, double* best_w_llm, double* best_w_asr,
                              double* best_wer, char** table_csv) {
  return guarded([&] {
    require(llm, "llm");
    require(asr, "asr");
    require(corpus, "corpus");
    uadf::StaticGrid grid;
    if (w_llm && n_llm > 0) grid.w_llm.assign(w_llm, w_llm + n_llm);
    if (w_asr && n_asr > 0) grid.w_asr.assign(w_asr, w_asr + n_asr);
    const auto result = uadf::grid_search_static(*llm->provider, *asr->provider, to_config(base), corpus->records, grid,
                                                 to_decode_options(options));
    if (best_w_llm) *best_w_llm = result.best.w_llm;
    if (best_w_asr) *best_w_asr = result.best.w_asr;
    if (best_wer) *best_wer = result.best.wer;
    if (table_csv) *table_csv = dup_string(uadf::grid_to_csv(result.table));
  });
}

uadf_status uadf_sweep_beta(const uadf_provider* llm, const uadf_provider* asr, const uadf_fusion_config* base,
                            const uadf_corpus* corpus, const double* betas, size_t n, const uadf_decode_options* options,
                            char** table_csv) {
  return guarded([&] {
    require(llm, "llm");
    require(asr, "asr");
    require(corpus, "corpus");
    require(table_csv, "table_csv");
    if (n > 0) require(betas, "betas");
    auto cfg = to_config(base);
    const auto table = uadf::sweep_beta(*llm->provider, *asr->provider, cfg, corpus->records,
                                        std::span<const double>(betas, n), to_decode_options(options));
    *table_csv = dup_string(uadf::beta_to_csv(table));
  });
}

uadf_status uadf_score(const uadf_corpus* corpus, const char* const* names, const char* const* hypothesis_paths,
                       size_t n_systems, const char* baseline, const uadf_provider* lm, double lm_lambda,
                       uadf_normalization normalization, char** document_json) {
  return guarded([&] {
    require(corpus, "corpus");
    require(document_json, "document_json");
    if (n_systems > 0) {
      require(names, "names");
      require(hypothesis_paths, "hypothesis_paths");
    }
    std::vector<std::pair<std::string, std::vector<uadf::HypothesisRecord>>> systems;
    for (size_t i = 0; i < n_systems; ++i) {
      require(names[i], "system name");
      require(hypothesis_paths[i], "hypothesis path");
      systems.emplace_back(names[i], uadf::load_hypotheses(hypothesis_paths[i]));
    }
    const uadf::NgramModel* model = nullptr;
    std::shared_ptr<const uadf::Vocabulary> vocab;
    if (lm) {
      auto* corrector = dynamic_cast<const uadf::NgramCorrector*>(lm->provider.get());
      if (!corrector) uadf::fail(uadf::ErrorCode::kConfiguration, "rescoring needs an n-gram corrector model");
      model = &corrector->model();
      vocab = corrector->vocabulary_ptr();
    }
    if (normalization != UADF_NORMALIZE_LOWERCASE && normalization != UADF_NORMALIZE_STRIP_PUNCTUATION) {
      uadf::fail(uadf::ErrorCode::kInvalidParameter, "unknown normalization");
    }
    const auto normalize = uadf::make_normalizer(normalization == UADF_NORMALIZE_LOWERCASE
                                                     ? uadf::Normalization::kLowercase
                                                     : uadf::Normalization::kStripPunctuation);
    std::optional<uadf::OracleReport> oracles;
    const bool has_nbest = std::any_of(corpus->records.begin(), corpus->records.end(),
                                       [](const auto& r) { return !r.nbest.empty(); });
    if (has_nbest) {
      if (!vocab) vocab = std::make_shared<const uadf::Vocabulary>(uadf::Vocabulary::from_words({}));
      oracles = uadf::score_oracles(corpus->records, *vocab, model, lm_lambda, normalize);
    }
    const auto doc = uadf::score_document(corpus->records, systems, baseline ? baseline : "", oracles, normalize);
    *document_json = dup_string(doc.dump(2));
  });
}

}  // extern "C"
