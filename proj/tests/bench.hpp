#pragma once

// The standard synthetic bench: default generation, the default corrector,
// and temperatures fitted on the validation split.

#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

#include "uadf/calibration.hpp"
#include "uadf/corpus.hpp"
#include "uadf/models.hpp"
#include "uadf/ngram.hpp"
#include "uadf/pipeline.hpp"

namespace testing {

struct Bench {
  std::shared_ptr<const uadf::Vocabulary> vocab;
  std::vector<uadf::CorpusRecord> train, val, test;
  std::unique_ptr<uadf::LogitProvider> llm, asr;
  uadf::TraceSet val_llm, val_asr;
  uadf::CalibrationReport cal_llm, cal_asr;

  void calibrate() {
    const auto utts = uadf::to_utterances(val, vocab);
    val_llm = uadf::collect_traces(*llm, utts);
    val_asr = uadf::collect_traces(*asr, utts);
    cal_llm = uadf::fit_temperature(val_llm);
    cal_asr = uadf::fit_temperature(val_asr);
  }

  uadf::FusionConfig config(uadf::FusionMode mode) const {
    uadf::FusionConfig cfg;
    cfg.mode = mode;
    cfg.tau1 = cal_llm.tau;
    cfg.tau2 = cal_asr.tau;
    return cfg;
  }

  static Bench generate(const uadf::GenerationOptions& options = {}) {
    auto corpus = uadf::generate_corpus(uadf::ReferenceSource::builtin(), options);
    Bench b;
    b.vocab = corpus.vocabulary;
    b.train = std::move(corpus.train);
    b.val = std::move(corpus.val);
    b.test = std::move(corpus.test);
    b.asr = std::move(corpus.acoustic);
    const auto pairs = uadf::to_training_pairs(b.train, *b.vocab);
    b.llm = uadf::train_ngram_corrector(b.vocab, pairs, uadf::CorrectorParams{});
    b.calibrate();
    return b;
  }

  // Reads the files a CLI pipeline wrote under `dir`.
  static Bench load(const std::filesystem::path& dir) {
    Bench b;
    b.vocab = std::make_shared<const uadf::Vocabulary>(uadf::Vocabulary::load(dir / "data/vocab.txt"));
    b.train = uadf::load_corpus(dir / "data/train.jsonl");
    b.val = uadf::load_corpus(dir / "data/val.jsonl");
    b.test = uadf::load_corpus(dir / "data/test.jsonl");
    b.llm = uadf::load_provider(dir / "models/llm.json", b.vocab);
    b.asr = uadf::load_provider(dir / "models/asr.json", b.vocab);
    b.calibrate();
    return b;
  }
};

}  // namespace testing
