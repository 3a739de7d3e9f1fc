#include "uadf/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "uadf/decoding.hpp"
#include "uadf/error.hpp"
#include "uadf/parallel.hpp"

namespace uadf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t pick_weighted(std::span<const double> weights, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

// ---------------------------------------------------------------------------
// Serialization

FieldMapping FieldMapping::from_json(const nlohmann::json& doc) {
  FieldMapping m;
  m.id = doc.value("id", m.id);
  m.reference = doc.value("reference", m.reference);
  m.observation = doc.value("observation", m.observation);
  m.nbest = doc.value("nbest", m.nbest);
  m.nbest_text = doc.value("nbest_text", m.nbest_text);
  m.nbest_score = doc.value("nbest_score", m.nbest_score);
  return m;
}

std::string serialize_record(const CorpusRecord& record) {
  nlohmann::ordered_json doc;
  doc["id"] = record.id;
  doc["reference"] = record.reference;
  doc["observation"] = record.observation;
  auto nbest = nlohmann::ordered_json::array();
  for (const auto& h : record.nbest) {
    nlohmann::ordered_json e;
    e["text"] = h.text;
    if (h.score) e["score"] = *h.score;
    nbest.push_back(std::move(e));
  }
  doc["nbest"] = std::move(nbest);
  return doc.dump();
}

void save_corpus(std::span<const CorpusRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write corpus file " + path.string());
  for (const auto& r : records) out << serialize_record(r) << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing corpus file " + path.string());
}

namespace {

const nlohmann::json& required(const nlohmann::json& doc, const std::string& field, std::size_t line) {
  auto it = doc.find(field);
  if (it == doc.end()) {
    fail(ErrorCode::kSchema, "line " + std::to_string(line) + ": missing required field '" + field + "'");
  }
  return *it;
}

std::string as_text(const nlohmann::json& v, const std::string& field, std::size_t line) {
  if (v.is_string()) return v.get<std::string>();
  fail(ErrorCode::kSchema, "line " + std::to_string(line) + ": field '" + field + "' must be a string");
}

}  // namespace

std::vector<CorpusRecord> parse_corpus(std::istream& in, const FieldMapping& mapping) {
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!doc.is_object()) fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": record is not an object");
    CorpusRecord r;
    if (mapping.id.empty()) {
      r.id = "utt-" + std::to_string(line_no);
    } else {
      const auto& id = required(doc, mapping.id, line_no);
      r.id = id.is_string() ? id.get<std::string>() : id.dump();
    }
    r.reference = as_text(required(doc, mapping.reference, line_no), mapping.reference, line_no);
    if (!mapping.observation.empty() && doc.contains(mapping.observation)) {
      r.observation = as_text(doc[mapping.observation], mapping.observation, line_no);
    }
    const auto& nbest = required(doc, mapping.nbest, line_no);
    if (!nbest.is_array()) fail(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": '" + mapping.nbest + "' must be an array");
    for (const auto& h : nbest) {
      NbestEntry e;
      if (h.is_string()) {
        e.text = h.get<std::string>();
      } else if (h.is_object()) {
        e.text = as_text(required(h, mapping.nbest_text, line_no), mapping.nbest_text, line_no);
        if (auto s = h.find(mapping.nbest_score); s != h.end() && !s->is_null()) {
          if (!s->is_number()) fail(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": hypothesis score must be a number");
          e.score = s->get<double>();
        }
      } else {
        fail(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": hypothesis must be a string or an object");
      }
      r.nbest.push_back(std::move(e));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path, const FieldMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open corpus file " + path.string());
  return parse_corpus(in, mapping);
}

// ---------------------------------------------------------------------------
// References

ReferenceSource ReferenceSource::builtin() { return ReferenceSource{Grammar::builtin(), {}}; }

ReferenceSource ReferenceSource::from_grammar_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open grammar file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ReferenceSource{Grammar::parse(ss.str()), {}};
}

ReferenceSource ReferenceSource::from_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open text file " + path.string());
  ReferenceSource src;
  std::string line;
  while (std::getline(in, line)) {
    auto words = split_words(line);
    if (!words.empty()) src.lines.push_back(join_words(words));
  }
  if (src.lines.empty()) fail(ErrorCode::kInvalidInput, "text source " + path.string() + " is empty");
  return src;
}

std::vector<std::string> ReferenceSource::words() const {
  if (grammar) return grammar->terminals();
  std::set<std::string> all;
  for (const auto& l : lines) {
    for (auto& w : split_words(l)) all.insert(std::move(w));
  }
  return {all.begin(), all.end()};
}

std::vector<std::string> sample_references(const ReferenceSource& source, std::size_t n, std::uint64_t seed,
                                           double mean_length) {
  if (n < 1) fail(ErrorCode::kInvalidParameter, "need at least one reference");
  std::mt19937_64 rng(derive_seed(seed, "references"));
  std::vector<std::string> out;
  out.reserve(n);
  if (!source.grammar) {
    if (source.lines.empty()) fail(ErrorCode::kInvalidInput, "reference source is empty");
    std::uniform_int_distribution<std::size_t> pick(0, source.lines.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(source.lines[pick(rng)]);
    return out;
  }
  if (!(mean_length >= 1.0)) fail(ErrorCode::kInvalidParameter, "mean sentence length must be >= 1");
  const Grammar& g = *source.grammar;
  const bool can_join = g.has_rule("JOIN");
  std::normal_distribution<double> length_dist(mean_length, mean_length / 4.0);
  constexpr int kCandidates = 6;
  auto distance = [](std::size_t len, double target) { return std::abs(static_cast<double>(len) - target); };
  for (std::size_t i = 0; i < n; ++i) {
    const double target = std::clamp(std::round(length_dist(rng)), 1.0, 3.0 * mean_length);
    std::vector<std::string> best;
    for (int c = 0; c < kCandidates; ++c) {
      auto words = g.expand("S", rng);
      while (can_join && static_cast<double>(words.size()) < target) {
        auto more = g.expand("JOIN", rng);
        auto clause = g.expand("S", rng);
        more.insert(more.end(), clause.begin(), clause.end());
        if (distance(words.size() + more.size(), target) >= distance(words.size(), target)) break;
        words.insert(words.end(), more.begin(), more.end());
      }
      if (best.empty() || distance(words.size(), target) < distance(best.size(), target)) best = std::move(words);
    }
    out.push_back(join_words(best));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel

ConfusionSets::ConfusionSets(const Vocabulary& vocabulary, std::uint64_t seed, std::size_t cluster_size)
    : alternatives_(vocabulary.size()), cluster_of_(vocabulary.size(), kNoCluster) {
  if (cluster_size < 2) fail(ErrorCode::kInvalidParameter, "confusion clusters need at least two words");
  std::vector<TokenId> words;
  for (TokenId id = kUnk + 1; id < vocabulary.size(); ++id) words.push_back(id);
  std::mt19937_64 rng(derive_seed(seed, "confusion"));
  std::shuffle(words.begin(), words.end(), rng);
  std::vector<std::vector<TokenId>> clusters;
  for (std::size_t i = 0; i < words.size(); i += cluster_size) {
    clusters.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(i),
                          words.begin() + static_cast<std::ptrdiff_t>(std::min(i + cluster_size, words.size())));
  }
  if (clusters.size() > 1 && clusters.back().size() == 1) {
    clusters[clusters.size() - 2].push_back(clusters.back().front());
    clusters.pop_back();
  }
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    const auto& c = clusters[ci];
    for (std::size_t i = 0; i < c.size(); ++i) {
      cluster_of_[c[i]] = ci;
      // Nearest members first, so a word and its first alternative rank each other highly.
      std::vector<std::size_t> order;
      for (std::size_t j = 0; j < c.size(); ++j) {
        if (j != i) order.push_back(j);
      }
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto da = a > i ? a - i : i - a;
        const auto db = b > i ? b - i : i - b;
        return da < db;
      });
      for (std::size_t j : order) alternatives_[c[i]].push_back(c[j]);
    }
  }
  n_clusters_ = clusters.size();
}

std::vector<double> ConfusionSets::alternative_weights(TokenId word, double concentration) const {
  const auto alts = alternatives(word);
  std::vector<double> w(alts.size());
  double total = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) total += (w[r] = std::exp(-concentration * static_cast<double>(r)));
  for (double& x : w) x /= total;
  return w;
}

void ChannelSpec::validate() const {
  auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate(substitution) || !rate(deletion) || !rate(insertion)) fail(ErrorCode::kInvalidParameter, "channel rates must lie in [0, 1]");
  if (substitution + deletion > 1.0) fail(ErrorCode::kInvalidParameter, "substitution + deletion must not exceed 1");
  if (!(concentration > 0.0) || !std::isfinite(concentration)) fail(ErrorCode::kInvalidParameter, "confusion concentration must be positive");
}

nlohmann::json ChannelSpec::to_json() const {
  return {{"substitution", substitution}, {"deletion", deletion}, {"insertion", insertion},
          {"concentration", concentration}, {"seed", seed}};
}

nlohmann::json AcousticParams::to_json() const {
  return {{"diag_min", diag_min}, {"diag_max", diag_max}, {"floor", floor}};
}

std::vector<std::string> corrupt(std::span<const std::string> reference, const ChannelSpec& channel,
                                 const Vocabulary& vocabulary, const ConfusionSets& confusion, std::mt19937_64& rng,
                                 std::span<const double> substitution_scale) {
  channel.validate();
  const std::size_t first_word = kUnk + 1;
  if (vocabulary.size() <= first_word) fail(ErrorCode::kInvalidInput, "vocabulary has no words");
  std::uniform_int_distribution<std::size_t> any_word(first_word, vocabulary.size() - 1);
  std::vector<std::string> out;
  out.reserve(reference.size() + 2);
  auto maybe_insert = [&] {
    if (channel.insertion > 0.0 && uniform01(rng) < channel.insertion) {
      out.push_back(vocabulary.token(static_cast<TokenId>(any_word(rng))));
    }
  };
  for (const auto& word : reference) {
    maybe_insert();
    const TokenId id = vocabulary.id(word);
    double p_sub = channel.substitution;
    if (!substitution_scale.empty()) p_sub = std::min(p_sub * substitution_scale[id], 1.0 - channel.deletion);
    const double u = uniform01(rng);
    if (u < p_sub) {
      const auto alts = confusion.alternatives(id);
      if (!alts.empty()) {
        const auto weights = confusion.alternative_weights(id, channel.concentration);
        out.push_back(vocabulary.token(alts[pick_weighted(weights, rng)]));
      } else {
        // Out-of-vocabulary or unclustered word: any other word will do.
        TokenId other = id;
        while (other == id && vocabulary.size() > first_word + 1) other = static_cast<TokenId>(any_word(rng));
        out.push_back(vocabulary.token(other));
      }
    } else if (u < p_sub + channel.deletion) {
      continue;
    } else {
      out.push_back(word);
    }
  }
  maybe_insert();
  return out;
}

ConfusionMatrix build_confusion_matrix(const Vocabulary& vocabulary, const ConfusionSets& confusion,
                                       const ChannelSpec& channel, const AcousticParams& params) {
  if (!(params.diag_min > 0.0 && params.diag_min <= params.diag_max && params.diag_max <= 1.0)) {
    fail(ErrorCode::kInvalidParameter, "acoustic diagonal range must satisfy 0 < diag_min <= diag_max <= 1");
  }
  const std::size_t v = vocabulary.size();
  ConfusionMatrix m(v);
  std::mt19937_64 rng(derive_seed(channel.seed, "acoustic"));
  std::uniform_real_distribution<double> diag(params.diag_min, params.diag_max);
  std::vector<double> cluster_diag(confusion.n_clusters());
  for (double& d : cluster_diag) d = params.diag_min == params.diag_max ? params.diag_min : diag(rng);
  std::vector<double> row(v);
  for (TokenId o = kUnk + 1; o < v; ++o) {
    if (confusion.cluster_of(o) == ConfusionSets::kNoCluster) continue;
    const double d = cluster_diag[confusion.cluster_of(o)];
    const auto alts = confusion.alternatives(o);
    if (alts.empty()) continue;
    std::fill(row.begin(), row.end(), 0.0);
    row[o] = d;
    const auto weights = confusion.alternative_weights(o, channel.concentration);
    for (std::size_t r = 0; r < alts.size(); ++r) row[alts[r]] += (1.0 - d) * weights[r];
    m.set_row(o, row);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Generation

UtteranceContext record_context(const CorpusRecord& record, const std::shared_ptr<const Vocabulary>& vocabulary) {
  std::vector<TokenSeq> nbest;
  nbest.reserve(record.nbest.size());
  for (const auto& h : record.nbest) nbest.push_back(vocabulary->encode(h.text));
  return make_context(record.id, std::move(nbest), vocabulary->encode(record.observation), vocabulary);
}

std::vector<Utterance> to_utterances(std::span<const CorpusRecord> records,
                                     const std::shared_ptr<const Vocabulary>& vocabulary) {
  std::vector<Utterance> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({record_context(r, vocabulary), vocabulary->encode(r.reference)});
  return out;
}

std::vector<TrainingPair> to_training_pairs(std::span<const CorpusRecord> records, const Vocabulary& vocabulary) {
  std::vector<TrainingPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    TrainingPair p;
    for (const auto& h : r.nbest) p.nbest.push_back(vocabulary.encode(h.text));
    p.reference = vocabulary.encode(r.reference);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> substitution_scale(const AcousticChannel& acoustic, std::span<const std::string> references) {
  const Vocabulary& vocab = acoustic.vocabulary();
  std::vector<double> scale(vocab.size(), 0.0);
  for (TokenId w = kUnk + 1; w < vocab.size(); ++w) scale[w] = 1.0 - acoustic.confusion().at(w, w);
  double weighted = 0.0;
  std::size_t n = 0;
  for (const auto& r : references) {
    for (const auto& word : split_words(r)) {
      weighted += scale[vocab.id(word)];
      ++n;
    }
  }
  if (n == 0 || weighted <= 0.0) return {};
  const double mean = weighted / static_cast<double>(n);
  for (double& x : scale) x /= mean;
  return scale;
}

GeneratedCorpus generate_corpus(const ReferenceSource& source, const GenerationOptions& options) {
  if (options.n_train < 1 || options.n_val < 1 || options.n_test < 1) {
    fail(ErrorCode::kInvalidParameter, "every split needs at least one record");
  }
  if (options.n_best < 5) fail(ErrorCode::kInvalidParameter, "N-best lists need at least 5 hypotheses");
  if (options.beam < options.n_best) fail(ErrorCode::kInvalidParameter, "beam width must be >= n_best");
  options.channel.validate();

  GeneratedCorpus out;
  const auto words = source.words();
  out.vocabulary = std::make_shared<const Vocabulary>(Vocabulary::from_words(words));
  const Vocabulary& vocab = *out.vocabulary;
  const ConfusionSets confusion(vocab, options.channel.seed, options.cluster_size);
  out.acoustic = make_acoustic_channel(out.vocabulary, build_confusion_matrix(vocab, confusion, options.channel, options.acoustic),
                                       options.acoustic.floor);

  const std::size_t total = options.n_train + options.n_val + options.n_test;
  const auto refs = sample_references(source, total, options.channel.seed, options.mean_length);
  const auto scale = substitution_scale(*out.acoustic, refs);

  std::vector<CorpusRecord> all(total);
  auto make_id = [&](std::size_t i) {
    const char* split = "train";
    if (i >= options.n_train + options.n_val) {
      split = "test";
      i -= options.n_train + options.n_val;
    } else if (i >= options.n_train) {
      split = "val";
      i -= options.n_train;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06zu", split, i);
    return std::string(buf);
  };
  parallel_for(total, options.workers, [&](std::size_t i) {
    CorpusRecord& r = all[i];
    r.id = make_id(i);
    r.reference = refs[i];
    const auto ref_words = split_words(refs[i]);
    std::mt19937_64 obs_rng(derive_seed(options.channel.seed, r.id + "/observation"));
    r.observation = join_words(corrupt(ref_words, options.channel, vocab, confusion, obs_rng, scale));
    std::mt19937_64 nbest_rng(derive_seed(options.channel.seed, r.id + "/nbest"));
    const auto heard = corrupt(ref_words, options.channel, vocab, confusion, nbest_rng, scale);
    const auto ctx = make_context(r.id, {}, vocab.encode(join_words(heard)), out.vocabulary);
    const auto hyps = beam_search(*out.acoustic, ctx, options.beam, options.n_best, 2 * heard.size() + 4);
    for (const auto& h : hyps) r.nbest.push_back({vocab.decode(h.tokens), h.score});
  });
  const auto val_begin = all.begin() + static_cast<std::ptrdiff_t>(options.n_train);
  const auto test_begin = val_begin + static_cast<std::ptrdiff_t>(options.n_val);
  out.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(val_begin));
  out.val.assign(std::make_move_iterator(val_begin), std::make_move_iterator(test_begin));
  out.test.assign(std::make_move_iterator(test_begin), std::make_move_iterator(all.end()));
  return out;
}

}  // namespace uadf
