// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "bench.hpp"
#include "helpers.hpp"
#include "uadf/decoding.hpp"
#include "uadf/error.hpp"
#include "uadf/metrics.hpp"
#include "uadf/prob.hpp"
#include "uadf/wire.hpp"

namespace fs = std::filesystem;
using namespace uadf;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << x;
  return s.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const fs::path& workdir, const std::string& args) {
  const std::string cmd = std::string(UADF_CLI_PATH) + " --workdir " + workdir.string() + " " + args + " >> " +
                          (workdir / "pipeline.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// simulate -> train-lm -> calibrate -> sweep -> decode (4 systems) -> score
bool pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  for (const char* step : {"simulate", "train-lm", "calibrate", "sweep --axis static", "decode --mode llm",
                           "decode --mode asr", "decode --mode uadf"}) {
    if (cli(dir, step) != 0) return false;
  }
  const auto best = nlohmann::json::parse(read_file(dir / "sweep/static_best.json"));
  const std::string st = "decode --mode static --w-llm " + format_double(best["w_llm"].get<double>()) +
                         " --w-asr " + format_double(best["w_asr"].get<double>());
  return cli(dir, st) == 0 && cli(dir, "score") == 0;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() != "pipeline.log") out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> softmax_oracle(const std::vector<double>& z, double tau) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp((z[i] - m) / tau);
  for (double& x : p) x /= s;
  return p;
}

// Step-by-step recomputation of the uadf decision rule.
TokenSeq brute_force(const testing::LogitFn& llm, const testing::LogitFn& asr, const FusionConfig& cfg,
                     const UtteranceContext& ctx, std::size_t max_len) {
  TokenSeq history{kBos}, out;
  while (out.size() < max_len) {
    const auto pl = softmax_oracle(llm(history, ctx), cfg.tau1);
    const auto pa = softmax_oracle(asr(history, ctx), cfg.tau2);
    double h = 0;
    for (double p : pl) h -= p > 0 ? p * std::log(p) : 0.0;
    const double w = 1.0 / (1.0 + std::exp(-h)) - cfg.beta;
    TokenId best = 0;
    for (TokenId v = 1; v < pl.size(); ++v) {
      if (pl[v] + w * pa[v] > pl[best] + w * pa[best]) best = v;
    }
    out.push_back(best);
    history.push_back(best);
    if (best == kEos) break;
  }
  return out;
}

}  // namespace

int main() {
  char tmpl[] = "/tmp/uadf-acceptance-XXXXXX";
  const fs::path root = ::mkdtemp(tmpl);
  const fs::path run_a = root / "a", run_b = root / "b";
  const bool ran_a = pipeline(run_a);

  guarded(1, [] {
    const double w = uadf_weight(9.91, 0.5);
    report(1, std::abs(w - 0.49995) <= 1e-4, "uadf_weight(9.91, 0.5) = " + fmt(w, 6));
  });

  guarded(2, [] {
    const double a = 100.0 * werr(1.61, 1.24), b = 100.0 * werr(2.83, 2.47);
    report(2, std::abs(a - 23.0) <= 0.05 && std::abs(b - 12.7) <= 0.05,
           "werr(1.61, 1.24) = " + fmt(a, 2) + "%, werr(2.83, 2.47) = " + fmt(b, 2) + "%");
  });

  guarded(3, [] {
    std::mt19937_64 rng(3);
    const double betas[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t cases = 0, equal = 0;
    for (int trial = 0; trial < 400; ++trial) {
      const std::size_t V = 3 + rng() % 3, max_len = 1 + rng() % 4;
      const std::uint64_t s1 = rng(), s2 = rng();
      testing::LogitFn fl = [=](auto h, const auto&) { return testing::hashed_logits(s1, h, V, 2.0); };
      testing::LogitFn fa = [=](auto h, const auto&) { return testing::hashed_logits(s2, h, V, 3.0); };
      auto v = testing::sized_vocab(V);
      testing::FnProvider llm(v, fl), asr(v, fa);
      FusionConfig cfg;
      cfg.beta = betas[rng() % 5];
      cfg.tau1 = std::exp(std::uniform_real_distribution<double>(-1.5, 1.5)(rng));
      cfg.tau2 = std::exp(std::uniform_real_distribution<double>(-1.5, 1.5)(rng));
      const auto ctx = testing::empty_context(v);
      ++cases;
      equal += fused_greedy_decode(llm, asr, cfg, ctx, max_len).tokens == brute_force(fl, fa, cfg, ctx, max_len);
    }
    report(3, cases >= 200 && equal == cases,
           std::to_string(equal) + "/" + std::to_string(cases) + " fused decodes match the brute-force recomputation");
  });

  std::unique_ptr<testing::Bench> loaded;
  if (ran_a) loaded = std::make_unique<testing::Bench>(testing::Bench::load(run_a));
  if (!ran_a) report(4, false, "CLI pipeline failed; see " + (run_a / "pipeline.log").string());
  if (ran_a) {
    const auto& bench = *loaded;
    guarded(4, [&] {
      bool ok = true;
      std::string detail;
      for (const auto& [name, rep] : {std::pair{"llm", &bench.cal_llm}, std::pair{"asr", &bench.cal_asr}}) {
        const double gap = std::abs(rep->mean_confidence - (1.0 - rep->ter));
        ok = ok && gap <= 1e-3 && rep->clamped == Clamp::kNone && rep->ece < rep->uncalibrated_ece;
        detail += std::string(name) + " tau " + fmt(rep->tau) + " gap " + fmt(gap, 5) + " clamp " +
                  to_string(rep->clamped) + " ECE " + fmt(rep->uncalibrated_ece) + " -> " + fmt(rep->ece) + "; ";
      }
      report(4, ok, detail);
    });
  }

  guarded(5, [] {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 5.0);
    std::size_t bad = 0;
    for (int i = 0; i < 10000; ++i) {
      std::vector<double> z(2 + rng() % 30);
      for (auto& x : z) x = n(rng);
      const auto want = std::max_element(z.begin(), z.end()) - z.begin();
      for (double tau : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        bad += static_cast<std::ptrdiff_t>(argmax_token(softmax_with_temperature(z, tau))) != want;
      }
    }
    report(5, bad == 0, std::to_string(bad) + " argmax changes over 10000 vectors x 5 temperatures");
  });

  if (!ran_a) {
    for (int id : {6, 7, 8, 9}) report(id, false, "CLI pipeline failed");
  } else {
    const auto& bench = *loaded;

    guarded(6, [&] {
      const DecodeOptions opts;
      const auto wer_of = [&](const FusionConfig& cfg) {
        return 100.0 * corpus_wer(decode_corpus(*bench.llm, *bench.asr, cfg, bench.test, opts), bench.test);
      };
      const double llm = wer_of(bench.config(FusionMode::kLlmOnly));
      const double asr = wer_of(bench.config(FusionMode::kAsrOnly));
      const double uadf = wer_of(bench.config(FusionMode::kUadf));
      const auto grid = grid_search_static(*bench.llm, *bench.asr, bench.config(FusionMode::kStatic), bench.val,
                                           StaticGrid{}, opts);
      auto st = bench.config(FusionMode::kStatic);
      st.w_llm = grid.best.w_llm;
      st.w_asr = grid.best.w_asr;
      const double stat = wer_of(st);
      report(6, uadf < llm && uadf < asr && uadf <= stat + 0.1,
             "test WER llm " + fmt(llm, 2) + "%, asr " + fmt(asr, 2) + "%, uadf " + fmt(uadf, 2) + "%, static (w_asr " +
                 fmt(grid.best.w_asr, 2) + " from val) " + fmt(stat, 2) + "%; uadf - static = " +
                 fmt(uadf - stat, 2) + " points");
    });

    guarded(7, [&] {
      const auto& corrector = *bench.llm;
      testing::FnProvider dirac(bench.vocab, [&](auto h, const auto& ctx) {
        const auto z = corrector.next_logits(h, ctx);
        std::vector<double> out(z.size(), -1e6);
        out[argmax_token(z)] = 0.0;
        return out;
      });
      auto cfg = bench.config(FusionMode::kUadf);
      cfg.beta = 0.5;
      const auto fused = decode_corpus(dirac, *bench.asr, cfg, bench.test, DecodeOptions{});
      const auto alone = decode_corpus(dirac, *bench.asr, bench.config(FusionMode::kLlmOnly), bench.test,
                                       DecodeOptions{});
      std::size_t same = 0;
      for (std::size_t i = 0; i < fused.size(); ++i) same += fused[i].tokens == alone[i].tokens;
      report(7, same == fused.size(),
             std::to_string(same) + "/" + std::to_string(fused.size()) + " test decodes equal llm-only");
    });

    guarded(8, [&] {
      std::size_t ordered = 0, with_nbest = 0;
      for (const auto& r : bench.test) {
        if (r.nbest.empty()) continue;
        ++with_nbest;
        const auto ref = split_words(r.reference);
        std::vector<Words> hyps;
        for (const auto& h : r.nbest) hyps.push_back(split_words(h.text));
        const double cp = oracle_compositional(hyps, ref).wer, nb = oracle_nbest(hyps, ref).wer;
        ordered += cp <= nb && nb <= wer(hyps.front(), ref).wer;
      }
      std::vector<double> sweep;
      for (double sub : {0.05, 0.15, 0.30}) {
        GenerationOptions g;
        g.channel.substitution = sub;
        const auto c = generate_corpus(ReferenceSource::builtin(), g);
        ScoreReport total;
        for (const auto& r : c.test) total += wer(r.nbest.front().text, r.reference);
        sweep.push_back(100.0 * total.wer);
      }
      const bool monotone = sweep[0] <= sweep[1] && sweep[1] <= sweep[2];
      report(8, with_nbest > 0 && ordered == with_nbest && monotone,
             std::to_string(ordered) + "/" + std::to_string(with_nbest) + " utterances ordered; 1-best WER " +
                 fmt(sweep[0], 2) + "% / " + fmt(sweep[1], 2) + "% / " + fmt(sweep[2], 2) + "% at 0.05 / 0.15 / 0.30");
    });

    guarded(9, [&] {
      const std::string command = std::string(UADF_CLI_PATH) + " --workdir " + run_a.string() +
                                  " serve --which llm --split test";
      auto remote = connect_external(bench.vocab, command, std::chrono::milliseconds(10000));
      const std::size_t n = std::min<std::size_t>(100, bench.test.size());
      const std::span<const CorpusRecord> subset(bench.test.data(), n);
      const auto cfg = bench.config(FusionMode::kUadf);
      const auto local = decode_corpus(*bench.llm, *bench.asr, cfg, subset, DecodeOptions{});
      const auto wired = decode_corpus(*remote, *bench.asr, cfg, subset, DecodeOptions{});
      std::size_t same = 0;
      for (std::size_t i = 0; i < n; ++i) same += local[i].tokens == wired[i].tokens;
      report(9, n == 100 && same == n,
             std::to_string(same) + "/" + std::to_string(n) + " served decodes match in-process decodes");
    });
  }

  guarded(10, [&] {
    const bool ran_b = pipeline(run_b);
    if (!ran_a || !ran_b) {
      report(10, false, "a CLI pipeline run failed");
      return;
    }
    const auto fa = files_under(run_a), fb = files_under(run_b);
    std::size_t differ = 0;
    for (const auto& f : fa) differ += read_file(run_a / f) != read_file(run_b / f);
    report(10, fa == fb && differ == 0 && !fa.empty(),
           std::to_string(fa.size()) + " files, " + std::to_string(differ) + " differ between two runs");
  });

  std::error_code ec;
  fs::remove_all(root, ec);
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
