#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "uadf/corpus.hpp"
#include "uadf/error.hpp"
#include "uadf/metrics.hpp"

using namespace uadf;

namespace {

ErrorCode code_of(const std::function<void()>& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidParameter;
}

GenerationOptions small_options() {
  GenerationOptions g;
  g.n_train = 40;
  g.n_val = 20;
  g.n_test = 60;
  return g;
}

struct Fixture {
  ReferenceSource source = ReferenceSource::builtin();
  std::shared_ptr<const Vocabulary> vocab = std::make_shared<const Vocabulary>(Vocabulary::from_words(source.words()));
  ConfusionSets confusion{*vocab, 99};
};

}  // namespace

TEST_CASE("reference sampling is seeded, sized and near the requested length") {
  const auto src = ReferenceSource::builtin();
  const auto a = sample_references(src, 100, 5);
  CHECK(a.size() == 100);
  CHECK(a == sample_references(src, 100, 5));
  CHECK(a != sample_references(src, 100, 6));

  const auto many = sample_references(src, 1000, 8, 12.0);
  double total = 0;
  for (const auto& s : many) total += static_cast<double>(split_words(s).size());
  CHECK(std::abs(total / 1000.0 - 12.0) <= 2.0);
}

TEST_CASE("grammar parsing and expansion") {
  const auto g = Grammar::parse("S -> go to CITY | fly to CITY\nCITY -> boston | denver\n");
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto w = g.expand("S", rng);
    REQUIRE(w.size() == 3);
    CHECK((w[0] == "go" || w[0] == "fly"));
    CHECK((w[2] == "boston" || w[2] == "denver"));
  }
  CHECK(g.terminals() == std::vector<std::string>{"boston", "denver", "fly", "go", "to"});
  CHECK_THROWS_AS(Grammar::parse("S go to\n"), Error);
  const auto words = ReferenceSource::builtin().words();
  CHECK(words.size() >= 150);
  CHECK(words.size() <= 250);
}

TEST_CASE("text sources sample their own lines") {
  testing::TempDir dir;
  testing::write_file(dir / "lines.txt", "hello world\ngood morning\n\n");
  const auto src = ReferenceSource::from_text_file(dir / "lines.txt");
  CHECK(src.words() == std::vector<std::string>{"good", "hello", "morning", "world"});
  for (const auto& s : sample_references(src, 30, 2)) CHECK((s == "hello world" || s == "good morning"));
}

TEST_CASE("confusion sets stay inside clusters and never list the word itself") {
  Fixture f;
  for (TokenId w = 3; w < f.vocab->size(); ++w) {
    const auto alts = f.confusion.alternatives(w);
    CHECK(!alts.empty());
    for (TokenId a : alts) {
      CHECK(a != w);
      CHECK(a >= 3);
      CHECK(f.confusion.cluster_of(a) == f.confusion.cluster_of(w));
    }
    const auto weights = f.confusion.alternative_weights(w, 1.0);
    double sum = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      sum += weights[i];
      if (i) CHECK(weights[i] < weights[i - 1]);
    }
    CHECK(sum == doctest::Approx(1.0));
  }
  CHECK(f.confusion.cluster_of(kBos) == ConfusionSets::kNoCluster);
}

TEST_CASE("noiseless channel copies the reference") {
  Fixture f;
  ChannelSpec ch;
  ch.substitution = ch.deletion = ch.insertion = 0.0;
  std::mt19937_64 rng(3);
  for (const auto& s : sample_references(f.source, 50, 4)) {
    const auto ref = split_words(s);
    CHECK(corrupt(ref, ch, *f.vocab, f.confusion, rng) == ref);
  }
}

TEST_CASE("saturated substitution changes every word") {
  Fixture f;
  ChannelSpec ch;
  ch.substitution = 1.0;
  ch.deletion = ch.insertion = 0.0;
  std::mt19937_64 rng(3);
  for (const auto& s : sample_references(f.source, 50, 4)) {
    const auto ref = split_words(s);
    const auto out = corrupt(ref, ch, *f.vocab, f.confusion, rng);
    REQUIRE(out.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out[i] != ref[i]);
  }
}

TEST_CASE("empirical substitution rate matches the channel") {
  Fixture f;
  ChannelSpec ch;
  ch.substitution = 0.15;
  ch.deletion = ch.insertion = 0.0;
  std::mt19937_64 rng(12345);
  std::size_t words = 0, substituted = 0;
  while (words < 10000) {
    for (const auto& s : sample_references(f.source, 20, rng())) {
      const auto ref = split_words(s);
      const auto out = corrupt(ref, ch, *f.vocab, f.confusion, rng);
      for (std::size_t i = 0; i < ref.size(); ++i) substituted += out[i] != ref[i];
      words += ref.size();
    }
  }
  CHECK(std::abs(static_cast<double>(substituted) / static_cast<double>(words) - 0.15) <= 0.01);
}

TEST_CASE("channel validation") {
  ChannelSpec ch;
  ch.substitution = 1.2;
  CHECK_THROWS_AS(ch.validate(), Error);
  ch = ChannelSpec{};
  ch.substitution = 0.9;
  ch.deletion = 0.2;
  CHECK_THROWS_AS(ch.validate(), Error);
  ch = ChannelSpec{};
  ch.concentration = 0.0;
  CHECK_THROWS_AS(ch.validate(), Error);
}

TEST_CASE("confusability scale averages to one over running words") {
  Fixture f;
  const auto refs = sample_references(f.source, 300, 1);
  ChannelSpec ch;
  AcousticParams ap;
  auto acoustic = make_acoustic_channel(f.vocab, build_confusion_matrix(*f.vocab, f.confusion, ch, ap), ap.floor);
  const auto scale = substitution_scale(*acoustic, refs);
  double total = 0;
  std::size_t n = 0;
  for (const auto& s : refs) {
    for (const auto& w : split_words(s)) {
      total += scale[f.vocab->id(w)];
      ++n;
    }
  }
  CHECK(total / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("noiseless generation yields perfect top hypotheses") {
  auto g = small_options();
  g.channel.substitution = g.channel.deletion = g.channel.insertion = 0.0;
  const auto c = generate_corpus(ReferenceSource::builtin(), g);
  CHECK(c.train.size() == 40);
  CHECK(c.val.size() == 20);
  CHECK(c.test.size() == 60);
  ScoreReport onb;
  for (const auto* split : {&c.train, &c.val, &c.test}) {
    for (const auto& r : *split) {
      REQUIRE(r.nbest.size() == 5);
      CHECK(r.nbest[0].text == r.reference);
      CHECK(r.observation == r.reference);
      std::vector<Words> hyps;
      for (const auto& h : r.nbest) hyps.push_back(split_words(h.text));
      onb += oracle_nbest(hyps, split_words(r.reference));
    }
  }
  CHECK(onb.wer == 0.0);
}

TEST_CASE("default channel leaves room between the 1-best and the n-best oracle") {
  auto g = small_options();
  g.n_test = 200;
  const auto c = generate_corpus(ReferenceSource::builtin(), g);
  ScoreReport one, onb;
  std::set<std::string> ids;
  for (const auto& r : c.test) {
    ids.insert(r.id);
    std::vector<Words> hyps;
    for (const auto& h : r.nbest) hyps.push_back(split_words(h.text));
    const auto ref = split_words(r.reference);
    one += wer(hyps[0], ref);
    onb += oracle_nbest(hyps, ref);
    for (std::size_t k = 1; k < r.nbest.size(); ++k) CHECK(*r.nbest[k - 1].score >= *r.nbest[k].score);
  }
  CHECK(ids.size() == 200);
  CHECK(one.wer > 0.0);
  CHECK(onb.wer < one.wer);
}

TEST_CASE("generation is deterministic and worker-independent") {
  auto g = small_options();
  const auto a = generate_corpus(ReferenceSource::builtin(), g);
  g.workers = 3;
  const auto b = generate_corpus(ReferenceSource::builtin(), g);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.acoustic->to_json() == b.acoustic->to_json());
  CHECK(a.test.front().id == "test-000000");
}

TEST_CASE("corpus files round trip") {
  testing::TempDir dir;
  const auto c = generate_corpus(ReferenceSource::builtin(), small_options());
  std::vector<CorpusRecord> records(c.train.begin(), c.train.end());
  records.insert(records.end(), c.test.begin(), c.test.end());
  REQUIRE(records.size() == 100);
  save_corpus(records, dir / "c.jsonl");
  CHECK(load_corpus(dir / "c.jsonl") == records);
}

TEST_CASE("mapped external files load") {
  FieldMapping m = FieldMapping::from_json(nlohmann::json{{"id", ""}, {"reference", "output"}, {"nbest", "input"}});
  const auto records = load_corpus(std::filesystem::path(FIXTURE_DIR) / "hypotheses_input_output.jsonl", m);
  REQUIRE(records.size() == 3);
  for (const auto& r : records) {
    CHECK(r.nbest.size() == 5);
    CHECK(!r.nbest[0].score.has_value());
  }
  CHECK(records[0].id == "utt-1");
  CHECK(records[2].reference == "list fares to dallas");
}

TEST_CASE("schema and parse errors name the problem") {
  std::string msg;
  FieldMapping m;
  m.reference = "output";
  std::istringstream missing(R"({"id": "a", "reference": "x", "nbest": []})");
  CHECK(code_of([&] { parse_corpus(missing, m); }, &msg) == ErrorCode::kSchema);
  CHECK(msg.find("'output'") != std::string::npos);
  std::istringstream broken("{\"id\": \"a\",\n");
  CHECK(code_of([&] { parse_corpus(broken); }) == ErrorCode::kParse);
  std::istringstream bad_nbest(R"({"id": "a", "reference": "x", "nbest": "y"})");
  CHECK(code_of([&] { parse_corpus(bad_nbest); }) == ErrorCode::kSchema);
  CHECK(code_of([] { load_corpus("/nonexistent/corpus.jsonl"); }) == ErrorCode::kIo);
}

TEST_CASE("derived seeds depend on key and seed") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}
