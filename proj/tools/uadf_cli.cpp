// Command-line driver: corpus simulation, corrector training, calibration,
// decoding, sweeps, scoring and reliability tables. Links only the C API.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uadf.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfigError = 2, kDataError = 3, kProviderError = 4 };

struct Failure : std::runtime_error {
  Failure(int code, const std::string& what) : std::runtime_error(what), exit_code(code) {}
  int exit_code;
};

[[noreturn]] void config_error(const std::string& what) { throw Failure(kConfigError, what); }

int exit_code_for(uadf_status s) {
  switch (s) {
    case UADF_OK: return kOk;
    case UADF_E_INVALID_PARAMETER:
    case UADF_E_CONFIGURATION: return kConfigError;
    case UADF_E_INVALID_INPUT:
    case UADF_E_PARSE:
    case UADF_E_SCHEMA:
    case UADF_E_IO: return kDataError;
    case UADF_E_PROVIDER_IO: return kProviderError;
    case UADF_E_INTERNAL: return kInternal;
  }
  return kInternal;
}

void check(uadf_status s) {
  if (s != UADF_OK) throw Failure(exit_code_for(s), uadf_last_error());
}

std::string take(char* s) {
  std::string out(s);
  uadf_string_free(s);
  return out;
}

// Owning wrappers over the C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : p(o.p) { o.p = nullptr; }
  Handle& operator=(Handle&& o) noexcept {
    std::swap(p, o.p);
    return *this;
  }
  ~Handle() {
    if (p) Free(p);
  }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Vocab = Handle<uadf_vocab, uadf_vocab_free>;
using Corpus = Handle<uadf_corpus, uadf_corpus_free>;
using Provider = Handle<uadf_provider, uadf_provider_free>;
using Calibration = Handle<uadf_calibration, uadf_calibration_free>;
using Batch = Handle<uadf_decode_batch, uadf_decode_batch_free>;

json default_config() {
  uadf_generate_options g;
  uadf_generate_options_init(&g);
  uadf_fit_options f;
  uadf_fit_options_init(&f);
  uadf_decode_options d;
  uadf_decode_options_init(&d);

  json c;
  c["seed"] = g.seed;
  c["workers"] = 1;
  c["corpus"] = {{"train", "data/train.jsonl"},
                 {"val", "data/val.jsonl"},
                 {"test", "data/test.jsonl"},
                 {"vocab", "data/vocab.txt"},
                 {"mapping", nullptr}};
  c["simulate"] = {{"n_train", g.n_train},
                   {"n_val", g.n_val},
                   {"n_test", g.n_test},
                   {"mean_length", g.mean_length},
                   {"substitution", g.substitution},
                   {"deletion", g.deletion},
                   {"insertion", g.insertion},
                   {"concentration", g.concentration},
                   {"diag_min", g.diag_min},
                   {"diag_max", g.diag_max},
                   {"floor", g.floor},
                   {"beam", g.beam},
                   {"n_best", g.n_best},
                   {"cluster_size", g.cluster_size},
                   {"grammar", nullptr},
                   {"text", nullptr}};
  c["corrector"] = {{"order", 4}, {"smoothing", 0.01}, {"vote_weight", 0.5}};
  c["providers"] = {{"llm", {{"kind", "ngram-corrector"}, {"model", "models/llm.json"}}},
                    {"asr", {{"kind", "acoustic-channel"}, {"model", "models/asr.json"}}}};
  c["calibration"] = {{"llm", "calibration/llm.json"},
                      {"asr", "calibration/asr.json"},
                      {"tol", f.tol},
                      {"tau_min", f.tau_min},
                      {"tau_max", f.tau_max},
                      {"max_iter", f.max_iter},
                      {"n_bins", f.n_bins}};
  c["fusion"] = {{"mode", "uadf"},       {"beta", 0.5},    {"combine", "outer-softmax"},
                 {"uncertainty", "entropy"}, {"w_llm", 1.0}, {"w_asr", 0.0},
                 {"tau1", nullptr},      {"tau2", nullptr}};
  c["decode"] = {{"split", "test"},
                 {"name", nullptr},
                 {"max_len_factor", d.max_len_factor},
                 {"free_max_len", d.free_max_len},
                 {"steps", false},
                 {"dir", "decode"}};
  c["sweep"] = {{"split", "val"},
                {"w_llm", {1.0}},
                {"w_asr", {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.75, 1.0, 1.5, 2.0}},
                {"betas", {0.0, 0.25, 0.5, 0.75}},
                {"dir", "sweep"}};
  c["score"] = {{"split", "test"},
                {"baseline", "llm"},
                {"systems", json::object()},
                {"lm_lambda", 0.5},
                {"normalize", "lowercase"},
                {"dir", "score"}};
  c["reliability"] = {{"split", "val"}, {"dir", "reliability"}};
  return c;
}

// Rejects keys the defaults do not know, so typos fail loudly.
void check_keys(const json& user, const json& defaults, const std::string& where) {
  if (!user.is_object() || !defaults.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    if (!defaults.contains(key)) config_error("unknown config key '" + where + key + "'");
    const auto& d = defaults.at(key);
    const bool free_form = where + key == "score.systems" || where + key == "corpus.mapping" || where == "providers.";
    if (d.is_object() && !free_form) {
      if (!value.is_object()) config_error("config key '" + where + key + "' must be an object");
      check_keys(value, d, where + key + ".");
    }
  }
}

class Config {
 public:
  Config(json doc, fs::path workdir) : doc_(std::move(doc)), workdir_(std::move(workdir)) {}

  const json& doc() const { return doc_; }
  json& doc() { return doc_; }

  const json& at(const std::string& dotted) const {
    const json* node = &doc_;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
      if (!node->is_object() || !node->contains(part)) config_error("missing config key '" + dotted + "'");
      node = &node->at(part);
    }
    return *node;
  }

  template <typename T>
  T get(const std::string& dotted) const {
    try {
      return at(dotted).get<T>();
    } catch (const nlohmann::json::exception&) {
      config_error("config key '" + dotted + "' has the wrong type");
    }
  }

  bool is_null(const std::string& dotted) const { return at(dotted).is_null(); }

  fs::path path(const std::string& dotted) const { return resolve(get<std::string>(dotted)); }
  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : workdir_ / p; }

  // Copies the resolved config next to a command's outputs.
  void stamp(const fs::path& dir) const {
    fs::create_directories(dir);
    write_text(dir / "resolved_config.json", doc_.dump(2) + "\n");
  }

  static void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Failure(kDataError, "cannot write " + path.string());
  }

 private:
  json doc_;
  fs::path workdir_;
};

uadf_mode parse_mode(const std::string& s) {
  if (s == "llm") return UADF_MODE_LLM;
  if (s == "asr") return UADF_MODE_ASR;
  if (s == "static") return UADF_MODE_STATIC;
  if (s == "uadf") return UADF_MODE_UADF;
  config_error("unknown fusion mode '" + s + "' (expected llm, asr, static or uadf)");
}

uadf_combine parse_combine(const std::string& s) {
  if (s == "outer-softmax") return UADF_COMBINE_OUTER_SOFTMAX;
  if (s == "renormalize") return UADF_COMBINE_RENORMALIZE;
  config_error("unknown combine rule '" + s + "' (expected outer-softmax or renormalize)");
}

uadf_uncertainty parse_uncertainty(const std::string& s) {
  if (s == "entropy") return UADF_UNCERTAINTY_ENTROPY;
  if (s == "argmax-term") return UADF_UNCERTAINTY_ARGMAX_TERM;
  config_error("unknown uncertainty measure '" + s + "' (expected entropy or argmax-term)");
}

const char* split_key(const std::string& split) {
  if (split == "train") return "corpus.train";
  if (split == "val") return "corpus.val";
  if (split == "test") return "corpus.test";
  config_error("unknown split '" + split + "' (expected train, val or test)");
}

uadf_normalization normalization(const Config& cfg) {
  const auto name = cfg.get<std::string>("score.normalize");
  if (name == "lowercase") return UADF_NORMALIZE_LOWERCASE;
  if (name == "strip-punctuation") return UADF_NORMALIZE_STRIP_PUNCTUATION;
  config_error("score.normalize must be lowercase or strip-punctuation");
}

void validate(const Config& cfg) {
  uadf_fusion_config f;
  uadf_fusion_config_init(&f);
  f.mode = parse_mode(cfg.get<std::string>("fusion.mode"));
  f.combine = parse_combine(cfg.get<std::string>("fusion.combine"));
  f.uncertainty = parse_uncertainty(cfg.get<std::string>("fusion.uncertainty"));
  f.beta = cfg.get<double>("fusion.beta");
  f.w_llm = cfg.get<double>("fusion.w_llm");
  f.w_asr = cfg.get<double>("fusion.w_asr");
  if (!cfg.is_null("fusion.tau1")) f.tau1 = cfg.get<double>("fusion.tau1");
  if (!cfg.is_null("fusion.tau2")) f.tau2 = cfg.get<double>("fusion.tau2");
  if (uadf_fusion_config_validate(&f) != UADF_OK) config_error(uadf_last_error());
  if (cfg.get<long long>("workers") < 1) config_error("workers must be >= 1");
  for (const char* which : {"llm", "asr"}) {
    const auto& p = cfg.at(std::string("providers.") + which);
    if (!p.is_object() || !p.contains("kind")) config_error(std::string("providers.") + which + " needs a kind");
  }
  for (const char* s : {"decode.split", "sweep.split", "score.split", "reliability.split"}) {
    split_key(cfg.get<std::string>(s));
  }
  normalization(cfg);
}

Vocab load_vocab(const Config& cfg) {
  Vocab v;
  if (cfg.is_null("corpus.vocab")) {
    // No vocabulary file: every word seen in the training split, sorted.
    Corpus train;
    const auto mapping = cfg.at("corpus.mapping");
    const std::string mapping_text = mapping.is_null() ? "" : mapping.dump();
    check(uadf_corpus_load(cfg.path("corpus.train").c_str(), mapping.is_null() ? nullptr : mapping_text.c_str(),
                           train.out()));
    std::set<std::string> words;
    auto add = [&](const char* text) {
      std::istringstream in(text);
      std::string w;
      while (in >> w) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
        if (w != "<s>" && w != "</s>" && w != "<unk>") words.insert(w);
      }
    };
    for (size_t i = 0; i < uadf_corpus_size(train.get()); ++i) {
      const char* s = nullptr;
      check(uadf_corpus_reference(train.get(), i, &s));
      add(s);
      check(uadf_corpus_observation(train.get(), i, &s));
      add(s);
      size_t n = 0;
      check(uadf_corpus_nbest_size(train.get(), i, &n));
      for (size_t r = 0; r < n; ++r) {
        check(uadf_corpus_nbest_text(train.get(), i, r, &s));
        add(s);
      }
    }
    std::vector<const char*> ptrs;
    for (const auto& w : words) ptrs.push_back(w.c_str());
    check(uadf_vocab_from_words(ptrs.data(), ptrs.size(), v.out()));
  } else {
    check(uadf_vocab_load(cfg.path("corpus.vocab").c_str(), v.out()));
  }
  return v;
}

Corpus load_split(const Config& cfg, const std::string& split) {
  Corpus c;
  const auto& mapping = cfg.at("corpus.mapping");
  const std::string mapping_text = mapping.is_null() ? "" : mapping.dump();
  check(uadf_corpus_load(cfg.path(split_key(split)).c_str(), mapping.is_null() ? nullptr : mapping_text.c_str(),
                         c.out()));
  return c;
}

Provider load_provider(const Config& cfg, const Vocab& vocab, const std::string& which) {
  const auto& spec = cfg.at("providers." + which);
  const std::string kind = spec.value("kind", "");
  Provider p;
  if (kind == "external") {
    if (!spec.contains("endpoint") || !spec.at("endpoint").is_string()) {
      config_error("providers." + which + ": external providers need an endpoint");
    }
    const int timeout = spec.value("timeout_ms", 10000);
    check(uadf_provider_connect(vocab.get(), spec.at("endpoint").get<std::string>().c_str(), timeout, p.out()));
  } else if (kind == "ngram-corrector" || kind == "acoustic-channel") {
    if (!spec.contains("model") || !spec.at("model").is_string()) {
      config_error("providers." + which + ": " + kind + " providers need a model path");
    }
    const auto path = cfg.resolve(spec.at("model").get<std::string>());
    check(uadf_provider_load(vocab.get(), path.c_str(), p.out()));
    if (kind != uadf_provider_kind(p.get())) {
      config_error("providers." + which + ": " + path.string() + " holds a " + uadf_provider_kind(p.get()) + " model");
    }
  } else {
    config_error("providers." + which + ": unknown kind '" + kind + "'");
  }
  return p;
}

// Temperature for one modality: explicit override, else the calibration report.
// Single-modality modes ignore temperature, so a missing report falls back to 1.
double temperature(const Config& cfg, const std::string& which, bool required) {
  const std::string key = which == "llm" ? "fusion.tau1" : "fusion.tau2";
  if (!cfg.is_null(key)) return cfg.get<double>(key);
  const auto report = cfg.path("calibration." + which);
  if (!fs::exists(report)) {
    if (!required) return 1.0;
    config_error("no calibration report at " + report.string() + "; run calibrate or pass --" +
                 (which == "llm" ? "tau1" : "tau2"));
  }
  double tau = 1.0;
  check(uadf_calibration_report_tau(report.c_str(), &tau));
  return tau;
}

uadf_fusion_config fusion_config(const Config& cfg) {
  uadf_fusion_config f;
  uadf_fusion_config_init(&f);
  f.mode = parse_mode(cfg.get<std::string>("fusion.mode"));
  f.combine = parse_combine(cfg.get<std::string>("fusion.combine"));
  f.uncertainty = parse_uncertainty(cfg.get<std::string>("fusion.uncertainty"));
  f.beta = cfg.get<double>("fusion.beta");
  f.w_llm = cfg.get<double>("fusion.w_llm");
  f.w_asr = cfg.get<double>("fusion.w_asr");
  const bool fused = f.mode == UADF_MODE_STATIC || f.mode == UADF_MODE_UADF;
  f.tau1 = temperature(cfg, "llm", fused);
  f.tau2 = temperature(cfg, "asr", fused);
  return f;
}

// Stamps the config with the temperatures actually used filled in.
void stamp_resolved(const Config& cfg, const uadf_fusion_config& f, const fs::path& dir) {
  Config resolved = cfg;
  resolved.doc()["fusion"]["tau1"] = f.tau1;
  resolved.doc()["fusion"]["tau2"] = f.tau2;
  resolved.stamp(dir);
}

uadf_decode_options decode_options(const Config& cfg) {
  uadf_decode_options d;
  uadf_decode_options_init(&d);
  d.max_len_factor = cfg.get<double>("decode.max_len_factor");
  d.free_max_len = cfg.get<size_t>("decode.free_max_len");
  d.workers = cfg.get<size_t>("workers");
  d.keep_steps = cfg.get<bool>("decode.steps") ? 1 : 0;
  return d;
}

uadf_fit_options fit_options(const Config& cfg) {
  uadf_fit_options f;
  uadf_fit_options_init(&f);
  f.tol = cfg.get<double>("calibration.tol");
  f.tau_min = cfg.get<double>("calibration.tau_min");
  f.tau_max = cfg.get<double>("calibration.tau_max");
  f.max_iter = cfg.get<int>("calibration.max_iter");
  f.n_bins = cfg.get<size_t>("calibration.n_bins");
  f.workers = cfg.get<size_t>("workers");
  return f;
}

std::string percent(double wer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * wer);
  return buf;
}

// ---- commands ----------------------------------------------------------

int cmd_simulate(const Config& cfg) {
  uadf_generate_options g;
  uadf_generate_options_init(&g);
  g.n_train = cfg.get<size_t>("simulate.n_train");
  g.n_val = cfg.get<size_t>("simulate.n_val");
  g.n_test = cfg.get<size_t>("simulate.n_test");
  g.mean_length = cfg.get<double>("simulate.mean_length");
  g.substitution = cfg.get<double>("simulate.substitution");
  g.deletion = cfg.get<double>("simulate.deletion");
  g.insertion = cfg.get<double>("simulate.insertion");
  g.concentration = cfg.get<double>("simulate.concentration");
  g.seed = cfg.get<uint64_t>("seed");
  g.diag_min = cfg.get<double>("simulate.diag_min");
  g.diag_max = cfg.get<double>("simulate.diag_max");
  g.floor = cfg.get<double>("simulate.floor");
  g.beam = cfg.get<size_t>("simulate.beam");
  g.n_best = cfg.get<size_t>("simulate.n_best");
  g.cluster_size = cfg.get<size_t>("simulate.cluster_size");
  g.workers = cfg.get<size_t>("workers");
  std::string grammar, text;
  if (!cfg.is_null("simulate.grammar")) {
    grammar = cfg.path("simulate.grammar").string();
    g.grammar_path = grammar.c_str();
  }
  if (!cfg.is_null("simulate.text")) {
    text = cfg.path("simulate.text").string();
    g.text_path = text.c_str();
  }
  if (cfg.is_null("corpus.vocab")) config_error("simulate needs corpus.vocab to name the vocabulary file");
  if (cfg.at("providers.asr").value("kind", "") != "acoustic-channel") {
    config_error("simulate writes the acoustic channel, so providers.asr must be an acoustic-channel model");
  }

  Vocab vocab;
  Corpus train, val, test;
  Provider acoustic;
  check(uadf_generate(&g, vocab.out(), train.out(), val.out(), test.out(), acoustic.out()));

  const auto vocab_path = cfg.path("corpus.vocab");
  const auto asr_path = cfg.resolve(cfg.at("providers.asr").at("model").get<std::string>());
  std::set<fs::path> dirs;
  for (const auto& p : {cfg.path("corpus.train"), cfg.path("corpus.val"), cfg.path("corpus.test"), vocab_path, asr_path}) {
    dirs.insert(p.parent_path());
    fs::create_directories(p.parent_path());
  }
  check(uadf_vocab_save(vocab.get(), vocab_path.c_str()));
  check(uadf_corpus_save(train.get(), cfg.path("corpus.train").c_str()));
  check(uadf_corpus_save(val.get(), cfg.path("corpus.val").c_str()));
  check(uadf_corpus_save(test.get(), cfg.path("corpus.test").c_str()));
  check(uadf_provider_save(acoustic.get(), asr_path.c_str()));

  char hash[65];
  check(uadf_vocab_hash(vocab.get(), hash));
  json manifest;
  manifest["seed"] = g.seed;
  manifest["generation"] = json::parse(take([&] {
    char* s = nullptr;
    check(uadf_generate_options_json(&g, &s));
    return s;
  }()));
  manifest["counts"] = {{"train", uadf_corpus_size(train.get())},
                        {"val", uadf_corpus_size(val.get())},
                        {"test", uadf_corpus_size(test.get())}};
  manifest["vocab_size"] = uadf_vocab_size(vocab.get());
  manifest["vocab_hash"] = hash;
  Config::write_text(cfg.path("corpus.train").parent_path() / "manifest.json", manifest.dump(2) + "\n");
  for (const auto& d : dirs) cfg.stamp(d);

  std::cout << "simulate: " << uadf_corpus_size(train.get()) << "/" << uadf_corpus_size(val.get()) << "/"
            << uadf_corpus_size(test.get()) << " records, vocabulary " << uadf_vocab_size(vocab.get()) << "\n";
  return kOk;
}

int cmd_train_lm(const Config& cfg) {
  const auto& spec = cfg.at("providers.llm");
  if (spec.value("kind", "") != "ngram-corrector") config_error("train-lm needs providers.llm of kind ngram-corrector");
  Vocab vocab = load_vocab(cfg);
  Corpus train = load_split(cfg, "train");
  Provider lm;
  check(uadf_provider_train_corrector(vocab.get(), train.get(), cfg.get<int>("corrector.order"),
                                      cfg.get<double>("corrector.smoothing"), cfg.get<double>("corrector.vote_weight"),
                                      lm.out()));
  const auto path = cfg.resolve(spec.at("model").get<std::string>());
  fs::create_directories(path.parent_path());
  check(uadf_provider_save(lm.get(), path.c_str()));
  cfg.stamp(path.parent_path());
  std::cout << "train-lm: " << uadf_corpus_size(train.get()) << " sentences -> " << path.filename().string() << "\n";
  return kOk;
}

int cmd_calibrate(const Config& cfg, const std::string& which) {
  Vocab vocab = load_vocab(cfg);
  Corpus val = load_split(cfg, "val");
  const auto opts = fit_options(cfg);
  for (const std::string w : {"llm", "asr"}) {
    if (which != "both" && which != w) continue;
    Provider p = load_provider(cfg, vocab, w);
    Calibration cal;
    check(uadf_calibrate(p.get(), val.get(), &opts, cal.out()));
    uadf_calibration_summary s;
    check(uadf_calibration_summary_get(cal.get(), &s));
    char* doc = nullptr;
    check(uadf_calibration_to_json(cal.get(), &doc));
    const auto path = cfg.path("calibration." + w);
    Config::write_text(path, take(doc) + "\n");
    cfg.stamp(path.parent_path());
    std::printf("calibrate %s: tau %.4f  confidence %.4f  accuracy %.4f  ECE %.4f -> %.4f%s\n", w.c_str(), s.tau,
                s.mean_confidence, 1.0 - s.ter, s.uncalibrated_ece, s.ece,
                s.clamped < 0 ? "  (clamped at tau_min)" : s.clamped > 0 ? "  (clamped at tau_max)" : "");
  }
  return kOk;
}

int cmd_decode(const Config& cfg) {
  Vocab vocab = load_vocab(cfg);
  const auto split = cfg.get<std::string>("decode.split");
  Corpus corpus = load_split(cfg, split);
  const auto fusion = fusion_config(cfg);
  Provider llm = load_provider(cfg, vocab, "llm");
  Provider asr = load_provider(cfg, vocab, "asr");
  const auto opts = decode_options(cfg);
  Batch batch;
  check(uadf_decode(llm.get(), asr.get(), &fusion, corpus.get(), &opts, batch.out()));

  const std::string name = cfg.is_null("decode.name") ? cfg.get<std::string>("fusion.mode")
                                                      : cfg.get<std::string>("decode.name");
  const auto dir = cfg.path("decode.dir") / name;
  fs::create_directories(dir);
  check(uadf_decode_batch_save(batch.get(), (dir / "hypotheses.jsonl").c_str()));
  if (opts.keep_steps) check(uadf_decode_batch_save_steps(batch.get(), (dir / "steps.jsonl").c_str()));
  stamp_resolved(cfg, fusion, dir);
  double wer = 0.0;
  check(uadf_decode_batch_wer(batch.get(), &wer));
  std::cout << "decode " << name << ": " << uadf_decode_batch_size(batch.get()) << " utterances, WER " << percent(wer)
            << "\n";
  return kOk;
}

int cmd_sweep(const Config& cfg, const std::string& axis) {
  Vocab vocab = load_vocab(cfg);
  const auto split = cfg.get<std::string>("sweep.split");
  Corpus corpus = load_split(cfg, split);
  Provider llm = load_provider(cfg, vocab, "llm");
  Provider asr = load_provider(cfg, vocab, "asr");
  const auto opts = decode_options(cfg);
  const auto dir = cfg.path("sweep.dir");
  fs::create_directories(dir);
  auto base = fusion_config(cfg);
  base.tau1 = temperature(cfg, "llm", true);
  base.tau2 = temperature(cfg, "asr", true);
  if (axis == "static") {
    base.mode = UADF_MODE_STATIC;
    const auto w_llm = cfg.get<std::vector<double>>("sweep.w_llm");
    const auto w_asr = cfg.get<std::vector<double>>("sweep.w_asr");
    if (w_llm.empty() || w_asr.empty()) config_error("sweep.w_llm and sweep.w_asr must be non-empty");
    double best_llm = 0, best_asr = 0, best_wer = 0;
    char* csv = nullptr;
    check(uadf_sweep_static(llm.get(), asr.get(), &base, corpus.get(), w_llm.data(), w_llm.size(), w_asr.data(),
                            w_asr.size(), &opts, &best_llm, &best_asr, &best_wer, &csv));
    Config::write_text(dir / "static.csv", take(csv));
    json best = {{"split", split}, {"w_llm", best_llm}, {"w_asr", best_asr}, {"wer", best_wer}};
    Config::write_text(dir / "static_best.json", best.dump(2) + "\n");
    std::cout << "sweep static: best w_llm " << best_llm << " w_asr " << best_asr << " WER " << percent(best_wer)
              << " on " << split << "\n";
  } else if (axis == "beta") {
    base.mode = UADF_MODE_UADF;
    const auto betas = cfg.get<std::vector<double>>("sweep.betas");
    if (betas.empty()) config_error("sweep.betas must be non-empty");
    char* csv = nullptr;
    check(uadf_sweep_beta(llm.get(), asr.get(), &base, corpus.get(), betas.data(), betas.size(), &opts, &csv));
    Config::write_text(dir / "beta.csv", take(csv));
    std::cout << "sweep beta: " << betas.size() << " rows on " << split << "\n";
  } else {
    config_error("unknown sweep axis '" + axis + "' (expected static or beta)");
  }
  stamp_resolved(cfg, base, dir);
  return kOk;
}

int cmd_score(const Config& cfg, const std::vector<std::string>& system_args) {
  Vocab vocab = load_vocab(cfg);
  Corpus corpus = load_split(cfg, cfg.get<std::string>("score.split"));

  std::vector<std::pair<std::string, std::string>> systems;
  for (const auto& arg : system_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0) config_error("system '" + arg + "' must be name=path");
    systems.emplace_back(arg.substr(0, eq), fs::absolute(arg.substr(eq + 1)).string());
  }
  if (systems.empty()) {
    for (const auto& [name, path] : cfg.at("score.systems").items()) {
      systems.emplace_back(name, cfg.resolve(path.get<std::string>()).string());
    }
  }
  if (systems.empty()) {
    for (const char* name : {"llm", "asr", "static", "uadf"}) {
      const auto p = cfg.path("decode.dir") / name / "hypotheses.jsonl";
      if (fs::exists(p)) systems.emplace_back(name, p.string());
    }
  }
  if (systems.empty()) config_error("nothing to score: no systems given and no decode outputs found");

  std::vector<const char*> names, paths;
  for (const auto& [n, p] : systems) {
    names.push_back(n.c_str());
    paths.push_back(p.c_str());
  }
  Provider lm;
  const auto& llm_spec = cfg.at("providers.llm");
  if (llm_spec.value("kind", "") == "ngram-corrector" &&
      fs::exists(cfg.resolve(llm_spec.at("model").get<std::string>()))) {
    lm = load_provider(cfg, vocab, "llm");
  }
  const auto baseline = cfg.get<std::string>("score.baseline");
  char* doc = nullptr;
  check(uadf_score(corpus.get(), names.data(), paths.data(), names.size(), baseline.c_str(), lm.get(),
                   cfg.get<double>("score.lm_lambda"), normalization(cfg), &doc));
  const std::string text = take(doc);
  const auto dir = cfg.path("score.dir");
  Config::write_text(dir / "scores.json", text + "\n");
  cfg.stamp(dir);

  const auto scores = json::parse(text);
  for (const auto& [name, s] : scores.at("systems").items()) {
    std::printf("%-10s WER %6.2f%%  WERR %+6.1f%%\n", name.c_str(), 100.0 * s.at("wer").get<double>(),
                100.0 * s.at("werr").get<double>());
  }
  if (scores.contains("oracles")) {
    const auto& o = scores.at("oracles");
    for (const auto& [name, s] : o.items()) {
      std::printf("%-10s WER %6.2f%%\n", name.c_str(), 100.0 * s.at("wer").get<double>());
    }
  }
  return kOk;
}

int cmd_reliability(const Config& cfg, const std::string& which, const std::string& stage) {
  if (which != "llm" && which != "asr") config_error("--which must be llm or asr");
  if (stage != "before" && stage != "after") config_error("--stage must be before or after");
  Vocab vocab = load_vocab(cfg);
  Corpus corpus = load_split(cfg, cfg.get<std::string>("reliability.split"));
  Provider p = load_provider(cfg, vocab, which);
  const auto opts = fit_options(cfg);
  Calibration cal;
  check(uadf_calibrate(p.get(), corpus.get(), &opts, cal.out()));
  uadf_calibration_summary s;
  check(uadf_calibration_summary_get(cal.get(), &s));
  const std::string key = which == "llm" ? "fusion.tau1" : "fusion.tau2";
  double tau = 1.0;
  if (stage == "after") tau = cfg.is_null(key) ? s.tau : cfg.get<double>(key);
  char* csv = nullptr;
  check(uadf_calibration_reliability_csv(cal.get(), tau, opts.n_bins, &csv));
  const auto dir = cfg.path("reliability.dir");
  Config::write_text(dir / (which + "_" + stage + ".csv"), take(csv));
  cfg.stamp(dir);
  std::printf("reliability %s %s: tau %.4f  ECE %.4f\n", which.c_str(), stage.c_str(), tau,
              stage == "before" ? s.uncalibrated_ece : s.ece);
  return kOk;
}

int cmd_serve(const Config& cfg, const std::string& which, const std::string& split, int port, size_t connections) {
  if (which != "llm" && which != "asr") config_error("--which must be llm or asr");
  Vocab vocab = load_vocab(cfg);
  Corpus corpus = load_split(cfg, split);
  Provider p = load_provider(cfg, vocab, which);
  if (port > 0) {
    std::cerr << "serve: " << which << " on port " << port << "\n";
    check(uadf_serve_tcp(p.get(), corpus.get(), port, connections));
  } else {
    check(uadf_serve_stdio(p.get(), corpus.get()));
  }
  return kOk;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    config_error(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware dynamic fusion of two token predictors"};
  app.require_subcommand(1);

  std::string config_path;
  std::string workdir = ".";
  std::optional<uint64_t> seed;
  std::optional<size_t> workers;
  std::optional<double> beta, tau1, tau2, w_llm, w_asr;
  std::optional<std::string> mode, combine, split, name;
  bool steps = false;
  std::string which = "both", stage = "after", axis = "static", serve_split = "test";
  int port = 0;
  size_t connections = 0;
  std::vector<std::string> systems;

  app.add_option("--config", config_path, "JSON config file merged over the defaults")->check(CLI::ExistingFile);
  app.add_option("--workdir", workdir, "Directory that relative config paths resolve against");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--workers", workers, "Worker threads");

  auto* simulate = app.add_subcommand("simulate", "Generate the synthetic corpus and acoustic channel");
  auto* train_lm = app.add_subcommand("train-lm", "Train the n-gram corrector on the training split");
  auto* calibrate = app.add_subcommand("calibrate", "Fit temperatures on the validation split");
  calibrate->add_option("--which", which, "llm, asr or both")->check(CLI::IsMember({"llm", "asr", "both"}));
  auto* decode = app.add_subcommand("decode", "Greedy fused decoding");
  auto* sweep = app.add_subcommand("sweep", "Static weight grid or beta sweep");
  sweep->add_option("--axis", axis, "static or beta")->check(CLI::IsMember({"static", "beta"}));
  auto* score = app.add_subcommand("score", "WER, WERR and oracle scores");
  score->add_option("systems", systems, "name=path hypothesis files (default: decode outputs)");
  auto* reliability = app.add_subcommand("reliability", "Reliability bins before or after calibration");
  reliability->add_option("--which", which, "llm or asr")->required()->check(CLI::IsMember({"llm", "asr"}));
  reliability->add_option("--stage", stage, "before or after")->check(CLI::IsMember({"before", "after"}));
  auto* serve = app.add_subcommand("serve", "Serve a provider over the line protocol (stdio or TCP)");
  serve->add_option("--which", which, "llm or asr")->required()->check(CLI::IsMember({"llm", "asr"}));
  serve->add_option("--split", serve_split, "Split whose utterances can be requested");
  serve->add_option("--port", port, "TCP port (default: stdio)");
  serve->add_option("--connections", connections, "Clients to serve before exiting (0: forever)");

  for (auto* sub : {decode, sweep}) {
    sub->add_option("--mode", mode, "llm, asr, static or uadf")->check(CLI::IsMember({"llm", "asr", "static", "uadf"}));
    sub->add_option("--combine", combine, "outer-softmax or renormalize")
        ->check(CLI::IsMember({"outer-softmax", "renormalize"}));
    sub->add_option("--beta", beta, "UADF beta (default 0.5)");
    sub->add_option("--tau1", tau1, "LLM temperature (overrides the calibration report)");
    sub->add_option("--tau2", tau2, "ASR temperature (overrides the calibration report)");
    sub->add_option("--w-llm", w_llm, "Static LLM weight");
    sub->add_option("--w-asr", w_asr, "Static ASR weight");
    sub->add_option("--split", split, "Split to decode");
  }
  decode->add_option("--name", name, "Output name (default: the mode)");
  decode->add_flag("--steps", steps, "Write per-step fusion diagnostics");
  score->add_option("--split", split, "Split to score against");
  reliability->add_option("--tau", tau1, "Temperature for the after stage (default: fitted)");
  reliability->add_option("--split", split, "Split to trace");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    json defaults = default_config();
    json doc = defaults;
    if (!config_path.empty()) {
      json user = load_config_file(config_path);
      if (!user.is_object()) config_error(config_path + ": config must be an object");
      check_keys(user, defaults, "");
      doc.merge_patch(user);
    }
    if (seed) doc["seed"] = *seed;
    if (workers) doc["workers"] = *workers;
    if (mode) doc["fusion"]["mode"] = *mode;
    if (combine) doc["fusion"]["combine"] = *combine;
    if (beta) doc["fusion"]["beta"] = *beta;
    if (w_llm) doc["fusion"]["w_llm"] = *w_llm;
    if (w_asr) doc["fusion"]["w_asr"] = *w_asr;
    if (reliability->parsed()) {
      if (tau1) doc["fusion"][which == "llm" ? "tau1" : "tau2"] = *tau1;
      if (split) doc["reliability"]["split"] = *split;
    } else {
      if (tau1) doc["fusion"]["tau1"] = *tau1;
      if (tau2) doc["fusion"]["tau2"] = *tau2;
    }
    if (split && decode->parsed()) doc["decode"]["split"] = *split;
    if (split && sweep->parsed()) doc["sweep"]["split"] = *split;
    if (split && score->parsed()) doc["score"]["split"] = *split;
    if (name) doc["decode"]["name"] = *name;
    if (steps) doc["decode"]["steps"] = true;

    Config cfg(std::move(doc), fs::path(workdir));
    validate(cfg);

    if (simulate->parsed()) return cmd_simulate(cfg);
    if (train_lm->parsed()) return cmd_train_lm(cfg);
    if (calibrate->parsed()) return cmd_calibrate(cfg, which);
    if (decode->parsed()) return cmd_decode(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg, axis);
    if (score->parsed()) return cmd_score(cfg, systems);
    if (reliability->parsed()) return cmd_reliability(cfg, which, stage);
    if (serve->parsed()) return cmd_serve(cfg, which, serve_split, port, connections);
  } catch (const Failure& e) {
    std::cerr << "uadf: " << e.what() << "\n";
    return e.exit_code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "uadf: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "uadf: internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
