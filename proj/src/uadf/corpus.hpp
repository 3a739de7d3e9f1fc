#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <istream>
#include <string_view>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uadf/acoustic.hpp"
#include "uadf/calibration.hpp"
#include "uadf/grammar.hpp"
#include "uadf/ngram.hpp"

namespace uadf {

struct NbestEntry {
  std::string text;
  std::optional<double> score;  // ln-probability from the beam search, when known

  bool operator==(const NbestEntry&) const = default;
};

struct CorpusRecord {
  std::string id;
  std::string reference;
  std::string observation;
  std::vector<NbestEntry> nbest;  // best first

  bool operator==(const CorpusRecord&) const = default;
};

// Where each record field lives in an input document. The defaults read the
// native format; e.g. {reference = "output", nbest = "input"} ingests files
// that keep hypotheses in an "input" array and the transcription in "output".
// An empty `id` field numbers records by line; an empty `observation` field
// leaves observations blank.
struct FieldMapping {
  std::string id = "id";
  std::string reference = "reference";
  std::string observation = "observation";
  std::string nbest = "nbest";
  std::string nbest_text = "text";
  std::string nbest_score = "score";

  static FieldMapping from_json(const nlohmann::json& doc);
};

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path, const FieldMapping& mapping = {});
std::vector<CorpusRecord> parse_corpus(std::istream& in, const FieldMapping& mapping = {});
void save_corpus(std::span<const CorpusRecord> records, const std::filesystem::path& path);
std::string serialize_record(const CorpusRecord& record);

// splitmix64-based mixing of a base seed with a string key.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

struct ReferenceSource {
  std::optional<Grammar> grammar;
  std::vector<std::string> lines;  // used when no grammar is given

  static ReferenceSource builtin();
  static ReferenceSource from_grammar_file(const std::filesystem::path& path);
  static ReferenceSource from_text_file(const std::filesystem::path& path);

  // Terminals of the grammar, or every word of the text, sorted.
  std::vector<std::string> words() const;
};

// Grammar sources aim at lengths drawn around `mean_length`: for each sentence
// a target length is sampled, several candidates are expanded (chaining clauses
// through JOIN when the grammar has one) and the closest is kept. Text sources
// sample lines uniformly with replacement.
std::vector<std::string> sample_references(const ReferenceSource& source, std::size_t n, std::uint64_t seed,
                                           double mean_length = 12.0);

// For each word, its confusable alternatives in rank order. Words are
// shuffled by the seed and cut into clusters; a word's alternatives are the
// other cluster members, nearest position first.
class ConfusionSets {
 public:
  ConfusionSets(const Vocabulary& vocabulary, std::uint64_t seed, std::size_t cluster_size = 3);

  static constexpr std::size_t kNoCluster = static_cast<std::size_t>(-1);

  std::span<const TokenId> alternatives(TokenId word) const { return alternatives_[word]; }
  std::size_t cluster_of(TokenId word) const { return cluster_of_[word]; }
  std::size_t n_clusters() const { return n_clusters_; }
  // Probabilities over alternatives(word): proportional to exp(-concentration * rank).
  std::vector<double> alternative_weights(TokenId word, double concentration) const;

 private:
  std::vector<std::vector<TokenId>> alternatives_;
  std::vector<std::size_t> cluster_of_;
  std::size_t n_clusters_ = 0;
};

struct ChannelSpec {
  double substitution = 0.15;
  double deletion = 0.02;
  double insertion = 0.02;
  double concentration = 1.0;
  std::uint64_t seed = 20240101;

  void validate() const;
  nlohmann::json to_json() const;
};

// Per-word independent edits: substitute (with a confusable alternative, never
// the word itself), delete, or keep; then each gap (before every word and after
// the last) receives a uniformly drawn word with probability `insertion`.
std::vector<std::string> corrupt(std::span<const std::string> reference, const ChannelSpec& channel,
                                 const Vocabulary& vocabulary, const ConfusionSets& confusion, std::mt19937_64& rng,
                                 std::span<const double> substitution_scale = {});

struct AcousticParams {
  double diag_min = 0.50;  // per-cluster self-probability is drawn in [diag_min, diag_max]
  double diag_max = 0.98;
  double floor = 1e-4;

  nlohmann::json to_json() const;
};

// Row o keeps d_o on o and spreads 1 - d_o over o's alternatives with the
// channel's concentration weights; reserved tokens map to themselves.
ConfusionMatrix build_confusion_matrix(const Vocabulary& vocabulary, const ConfusionSets& confusion,
                                       const ChannelSpec& channel, const AcousticParams& params);

struct GenerationOptions {
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 500;
  double mean_length = 12.0;
  ChannelSpec channel;
  AcousticParams acoustic;
  std::size_t beam = 8;
  std::size_t n_best = 5;
  std::size_t cluster_size = 3;
  std::size_t workers = 1;
};

// Per-word multipliers on the substitution rate: proportional to how much
// mass the acoustic row moves off the word, normalized so the mean over the
// running words of `references` is 1.
std::vector<double> substitution_scale(const AcousticChannel& acoustic, std::span<const std::string> references);

struct GeneratedCorpus {
  std::shared_ptr<const Vocabulary> vocabulary;
  std::unique_ptr<AcousticChannel> acoustic;
  std::vector<CorpusRecord> train;
  std::vector<CorpusRecord> val;
  std::vector<CorpusRecord> test;
};

// For each reference: corrupt it twice with independent noise; the first
// copy is the observation the fusion-time acoustic provider reads, the second
// feeds a beam search over the same acoustic channel whose top n_best
// hypotheses form the N-best list.
GeneratedCorpus generate_corpus(const ReferenceSource& source, const GenerationOptions& options);

// Converts records to provider contexts / calibration utterances.
UtteranceContext record_context(const CorpusRecord& record, const std::shared_ptr<const Vocabulary>& vocabulary);
std::vector<Utterance> to_utterances(std::span<const CorpusRecord> records,
                                     const std::shared_ptr<const Vocabulary>& vocabulary);
std::vector<TrainingPair> to_training_pairs(std::span<const CorpusRecord> records, const Vocabulary& vocabulary);

}  // namespace uadf
