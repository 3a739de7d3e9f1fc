#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "uadf.h"

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    char tmpl[] = "/tmp/uadf-capi-XXXXXX";
    path = ::mkdtemp(tmpl);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  uadf_string_free(s);
  return out;
}

// Logits that always favour `word` until `len` tokens, then EOS.
struct Script {
  uadf_token word;
  size_t len;
  int calls = 0;
};

int scripted(void* user, const char*, const uadf_token* history, size_t history_len, double* logits, size_t v) {
  auto* s = static_cast<Script*>(user);
  ++s->calls;
  if (history_len == 0 || history[0] != UADF_BOS) return 1;
  for (size_t i = 0; i < v; ++i) logits[i] = 0.0;
  logits[history_len - 1 < s->len ? s->word : UADF_EOS] = 6.0;
  return 0;
}

int failing(void*, const char*, const uadf_token*, size_t, double*, size_t) { return 7; }

int with_nan(void*, const char*, const uadf_token*, size_t, double* logits, size_t v) {
  for (size_t i = 0; i < v; ++i) logits[i] = 0.0;
  logits[0] = NAN;
  return 0;
}

}  // namespace

TEST_CASE("status strings and last error") {
  CHECK(std::string(uadf_version()) == "1.0.0");
  CHECK(std::string(uadf_status_string(UADF_OK)).size() > 0);
  double w = 0;
  double r = 0;
  CHECK(uadf_werr(0.0, 0.1, &r) == UADF_E_INVALID_PARAMETER);
  CHECK(std::string(uadf_last_error()).size() > 0);
  CHECK(uadf_weight(0.0, 0.5, nullptr) == UADF_E_INVALID_PARAMETER);
  CHECK(uadf_weight(0.0, 0.5, &w) == UADF_OK);
  CHECK(w == doctest::Approx(0.0));
}

TEST_CASE("numerics through the C boundary") {
  double w = 0;
  REQUIRE(uadf_weight(9.91, 0.5, &w) == UADF_OK);
  CHECK(std::abs(w - (1.0 / (1.0 + std::exp(-9.91)) - 0.5)) < 1e-12);
  double r = 0;
  REQUIRE(uadf_werr(1.61, 1.24, &r) == UADF_OK);
  CHECK(r == doctest::Approx((1.61 - 1.24) / 1.61));
  CHECK(uadf_werr(0.0, 1.0, &r) == UADF_E_INVALID_PARAMETER);

  const double z[3] = {1.0, 2.0, 3.0};
  double p[3];
  REQUIRE(uadf_softmax(z, 3, 1.0, p) == UADF_OK);
  const double s = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / s));
  CHECK(uadf_softmax(z, 3, 0.0, p) == UADF_E_INVALID_PARAMETER);
  double h = 0;
  const double u[4] = {0.25, 0.25, 0.25, 0.25};
  REQUIRE(uadf_entropy(u, 4, &h) == UADF_OK);
  CHECK(h == doctest::Approx(std::log(4.0)));
  uadf_token a = 9;
  const double tie[3] = {1.0, 3.0, 3.0};
  REQUIRE(uadf_argmax(tie, 3, &a) == UADF_OK);
  CHECK(a == 1);

  uadf_wer_result res{};
  REQUIRE(uadf_wer("a x c", "a b c", &res) == UADF_OK);
  CHECK(res.substitutions == 1);
  CHECK(res.wer == doctest::Approx(1.0 / 3.0));
  CHECK(uadf_wer("a", "", &res) != UADF_OK);
}

TEST_CASE("fusion step") {
  uadf_fusion_config cfg;
  uadf_fusion_config_init(&cfg);
  CHECK(cfg.mode == UADF_MODE_UADF);
  CHECK(cfg.beta == 0.5);
  const double llm[3] = {0.0, 0.0, 0.0};
  const double asr[3] = {0.0, 0.0, 4.0};
  double fused[3];
  uadf_fusion_info info{};
  REQUIRE(uadf_fuse(llm, asr, 3, &cfg, fused, &info) == UADF_OK);
  // uniform LLM: u = ln 3
  CHECK(info.uncertainty == doctest::Approx(std::log(3.0)));
  CHECK(info.w_asr_effective == doctest::Approx(1.0 / (1.0 + 1.0 / 3.0) - 0.5));
  CHECK(info.chosen == 2);
  CHECK(fused[0] + fused[1] + fused[2] == doctest::Approx(1.0));
  REQUIRE(uadf_fuse(llm, asr, 3, &cfg, nullptr, &info) == UADF_OK);
  cfg.beta = -0.1;
  CHECK(uadf_fusion_config_validate(&cfg) == UADF_E_INVALID_PARAMETER);
  CHECK(uadf_fuse(llm, asr, 3, &cfg, fused, &info) == UADF_E_INVALID_PARAMETER);
}

TEST_CASE("vocabulary handles") {
  const char* words[] = {"alpha", "beta"};
  uadf_vocab* v = nullptr;
  REQUIRE(uadf_vocab_from_words(words, 2, &v) == UADF_OK);
  CHECK(uadf_vocab_size(v) == 5);
  const char* tok = nullptr;
  REQUIRE(uadf_vocab_token(v, 4, &tok) == UADF_OK);
  CHECK(std::string(tok) == "beta");
  CHECK(uadf_vocab_token(v, 5, &tok) == UADF_E_INVALID_INPUT);
  uadf_token id = 0;
  REQUIRE(uadf_vocab_id(v, "nope", &id) == UADF_OK);
  CHECK(id == UADF_UNK);
  char hash[65];
  REQUIRE(uadf_vocab_hash(v, hash) == UADF_OK);
  CHECK(std::strlen(hash) == 64);

  TempDir dir;
  REQUIRE(uadf_vocab_save(v, (dir / "v.txt").c_str()) == UADF_OK);
  uadf_vocab* back = nullptr;
  REQUIRE(uadf_vocab_load((dir / "v.txt").c_str(), &back) == UADF_OK);
  char hash2[65];
  REQUIRE(uadf_vocab_hash(back, hash2) == UADF_OK);
  CHECK(std::string(hash) == hash2);
  CHECK(uadf_vocab_load((dir / "missing.txt").c_str(), &back) == UADF_E_IO);
  uadf_vocab_free(back);
  uadf_vocab_free(v);
  uadf_vocab_free(nullptr);
}

TEST_CASE("callback provider decodes through the C API") {
  TempDir dir;
  {
    std::FILE* f = std::fopen((dir / "c.jsonl").c_str(), "w");
    std::fputs("{\"id\":\"a\",\"reference\":\"go go go\",\"observation\":\"go stop go\",\"nbest\":[]}\n", f);
    std::fputs("{\"id\":\"b\",\"reference\":\"go\",\"observation\":\"stop\",\"nbest\":[]}\n", f);
    std::fclose(f);
  }
  const char* words[] = {"go", "stop"};
  uadf_vocab* v = nullptr;
  REQUIRE(uadf_vocab_from_words(words, 2, &v) == UADF_OK);
  uadf_corpus* c = nullptr;
  REQUIRE(uadf_corpus_load((dir / "c.jsonl").c_str(), nullptr, &c) == UADF_OK);
  REQUIRE(uadf_corpus_size(c) == 2);

  Script go{3, 3};
  uadf_provider* llm = nullptr;
  REQUIRE(uadf_provider_from_callback(v, scripted, &go, &llm) == UADF_OK);
  CHECK(std::string(uadf_provider_kind(llm)) == "callback");

  uadf_fusion_config cfg;
  uadf_fusion_config_init(&cfg);
  cfg.mode = UADF_MODE_LLM;
  uadf_decode_options opt;
  uadf_decode_options_init(&opt);
  uadf_decode_batch* batch = nullptr;
  REQUIRE(uadf_decode(llm, llm, &cfg, c, &opt, &batch) == UADF_OK);
  REQUIRE(uadf_decode_batch_size(batch) == 2);
  const char* hyp = nullptr;
  REQUIRE(uadf_decode_batch_hypothesis(batch, 0, &hyp) == UADF_OK);
  CHECK(std::string(hyp) == "go go go");
  int eos = 0;
  REQUIRE(uadf_decode_batch_terminated(batch, 1, &eos) == UADF_OK);
  // reference of one word caps the second decode at 2 tokens
  CHECK(eos == 0);
  const uadf_token* toks = nullptr;
  size_t n = 0;
  REQUIRE(uadf_decode_batch_tokens(batch, 1, &toks, &n) == UADF_OK);
  CHECK(n == 2);
  double wer = 0;
  REQUIRE(uadf_decode_batch_wer(batch, &wer) == UADF_OK);
  CHECK(wer == doctest::Approx(1.0 / 4.0));
  REQUIRE(uadf_decode_batch_save(batch, (dir / "h.jsonl").c_str()) == UADF_OK);
  CHECK(uadf_decode_batch_save_steps(batch, (dir / "s.jsonl").c_str()) != UADF_OK);
  CHECK(go.calls > 0);

  const char* names[] = {"llm"};
  const std::string hpath = dir / "h.jsonl";
  const char* paths[] = {hpath.c_str()};
  char* doc = nullptr;
  REQUIRE(uadf_score(c, names, paths, 1, "llm", nullptr, 0.5, UADF_NORMALIZE_LOWERCASE, &doc) == UADF_OK);
  CHECK(take(doc).find("\"werr\": 0.0") != std::string::npos);

  uadf_provider* bad = nullptr;
  REQUIRE(uadf_provider_from_callback(v, failing, nullptr, &bad) == UADF_OK);
  uadf_decode_batch* b2 = nullptr;
  CHECK(uadf_decode(bad, llm, &cfg, c, &opt, &b2) == UADF_E_PROVIDER_IO);
  CHECK(b2 == nullptr);
  uadf_provider* nan = nullptr;
  REQUIRE(uadf_provider_from_callback(v, with_nan, nullptr, &nan) == UADF_OK);
  CHECK(uadf_decode(nan, llm, &cfg, c, &opt, &b2) == UADF_E_PROVIDER_IO);

  CHECK(uadf_decode(nullptr, llm, &cfg, c, &opt, &b2) == UADF_E_INVALID_PARAMETER);
  CHECK(uadf_provider_from_callback(v, nullptr, nullptr, &bad) == UADF_E_INVALID_PARAMETER);
  CHECK(uadf_corpus_load((dir / "nope.jsonl").c_str(), nullptr, &c) == UADF_E_IO);

  uadf_provider_free(nan);
  uadf_provider_free(bad);
  uadf_decode_batch_free(batch);
  uadf_provider_free(llm);
  uadf_corpus_free(c);
  uadf_vocab_free(v);
}

TEST_CASE("generate, train, calibrate and decode a small corpus") {
  uadf_generate_options g;
  uadf_generate_options_init(&g);
  CHECK(g.substitution == 0.15);
  g.n_train = 200;
  g.n_val = 30;
  g.n_test = 30;
  uadf_vocab* v = nullptr;
  uadf_corpus *train = nullptr, *val = nullptr, *test = nullptr;
  uadf_provider* asr = nullptr;
  REQUIRE(uadf_generate(&g, &v, &train, &val, &test, &asr) == UADF_OK);
  CHECK(uadf_corpus_size(train) == 200);
  size_t nb = 0;
  REQUIRE(uadf_corpus_nbest_size(test, 0, &nb) == UADF_OK);
  CHECK(nb == 5);
  CHECK(std::string(uadf_provider_kind(asr)) == "acoustic-channel");
  char* gj = nullptr;
  REQUIRE(uadf_generate_options_json(&g, &gj) == UADF_OK);
  CHECK(take(gj).find("\"substitution\"") != std::string::npos);

  uadf_provider* llm = nullptr;
  REQUIRE(uadf_provider_train_corrector(v, train, 4, 0.01, 0.5, &llm) == UADF_OK);
  CHECK(uadf_provider_train_corrector(v, train, 0, 0.01, 0.5, &llm) == UADF_E_INVALID_PARAMETER);

  uadf_fit_options fo;
  uadf_fit_options_init(&fo);
  uadf_calibration* cal = nullptr;
  REQUIRE(uadf_calibrate(llm, val, &fo, &cal) == UADF_OK);
  uadf_calibration_summary s{};
  REQUIRE(uadf_calibration_summary_get(cal, &s) == UADF_OK);
  CHECK(s.tau >= fo.tau_min);
  CHECK(s.tau <= fo.tau_max);
  if (s.clamped == 0) CHECK(std::abs(s.mean_confidence - (1.0 - s.ter)) <= fo.tol);
  char* csv = nullptr;
  REQUIRE(uadf_calibration_reliability_csv(cal, s.tau, 10, &csv) == UADF_OK);
  const auto text = take(csv);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);

  TempDir dir;
  char* js = nullptr;
  REQUIRE(uadf_calibration_to_json(cal, &js) == UADF_OK);
  {
    std::FILE* f = std::fopen((dir / "cal.json").c_str(), "w");
    std::fputs(take(js).c_str(), f);
    std::fclose(f);
  }
  double tau = 0;
  REQUIRE(uadf_calibration_report_tau((dir / "cal.json").c_str(), &tau) == UADF_OK);
  CHECK(tau == s.tau);

  REQUIRE(uadf_provider_save(llm, (dir / "llm.json").c_str()) == UADF_OK);
  uadf_provider* llm2 = nullptr;
  REQUIRE(uadf_provider_load(v, (dir / "llm.json").c_str(), &llm2) == UADF_OK);

  uadf_fusion_config cfg;
  uadf_fusion_config_init(&cfg);
  cfg.tau1 = s.tau;
  uadf_decode_options opt;
  uadf_decode_options_init(&opt);
  uadf_decode_batch *a = nullptr, *b = nullptr;
  REQUIRE(uadf_decode(llm, asr, &cfg, test, &opt, &a) == UADF_OK);
  REQUIRE(uadf_decode(llm2, asr, &cfg, test, &opt, &b) == UADF_OK);
  for (size_t i = 0; i < uadf_decode_batch_size(a); ++i) {
    const char *ha = nullptr, *hb = nullptr;
    uadf_decode_batch_hypothesis(a, i, &ha);
    uadf_decode_batch_hypothesis(b, i, &hb);
    CHECK(std::string(ha) == hb);
  }

  const double wl[] = {1.0};
  const double wa[] = {0.0, 0.5};
  double bl = 0, ba = 0, bw = 0;
  char* table = nullptr;
  REQUIRE(uadf_sweep_static(llm, asr, &cfg, val, wl, 1, wa, 2, &opt, &bl, &ba, &bw, &table) == UADF_OK);
  CHECK(take(table).rfind("w_llm,w_asr,wer\n", 0) == 0);
  const double betas[] = {0.25, 0.5};
  REQUIRE(uadf_sweep_beta(llm, asr, &cfg, val, betas, 2, &opt, &table) == UADF_OK);
  CHECK(take(table).rfind("beta,wer\n", 0) == 0);

  uadf_decode_batch_free(a);
  uadf_decode_batch_free(b);
  uadf_calibration_free(cal);
  uadf_provider_free(llm2);
  uadf_provider_free(llm);
  uadf_provider_free(asr);
  uadf_corpus_free(train);
  uadf_corpus_free(val);
  uadf_corpus_free(test);
  uadf_vocab_free(v);
}
