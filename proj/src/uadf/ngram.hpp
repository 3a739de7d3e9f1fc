#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "uadf/provider.hpp"

namespace uadf {

// Add-k smoothed n-gram model over word ids. Sentences are scored as
// BOS w1 .. wm EOS. A context never seen in training backs off to the
// longest seen suffix, down to the unigram.
class NgramModel {
 public:
  NgramModel(std::size_t vocab_size, int order, double smoothing);

  void add_sentence(std::span<const TokenId> words);

  // Fills `out` (length V) with p(. | last order-1 tokens of history).
  void distribution(std::span<const TokenId> history, std::span<double> out) const;
  double prob(std::span<const TokenId> history, TokenId next) const;
  // Sum of ln p over words and the closing EOS.
  double sentence_log_prob(std::span<const TokenId> words) const;

  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  std::size_t vocab_size() const { return vocab_size_; }

  nlohmann::json to_json() const;
  static NgramModel from_json(const nlohmann::json& doc, std::size_t vocab_size);

  bool operator==(const NgramModel&) const = default;

 private:
  struct Row {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> next;
    bool operator==(const Row&) const = default;
  };

  const Row* find_context(std::span<const TokenId> history) const;

  std::size_t vocab_size_;
  int order_;
  double smoothing_;
  std::map<TokenSeq, Row> rows_;
};

struct CorrectorParams {
  int order = 4;
  double smoothing = 0.01;
  double vote_weight = 0.5;
};

// Stand-in for the hypotheses-to-transcription model: a linear mixture of an
// n-gram prior over reference text and a positional vote over the N-best list.
//   p(v | hist, ctx) = (1 - vote_weight) p_ngram(v | hist) + vote_weight p_vote(v | t, ctx.nbest)
// Logits are ln of that mixture.
class NgramCorrector final : public LogitProvider {
 public:
  NgramCorrector(std::shared_ptr<const Vocabulary> vocabulary, NgramModel model, double vote_weight);

  ProviderKind kind() const override { return ProviderKind::kNgramCorrector; }

  const NgramModel& model() const { return model_; }
  double vote_weight() const { return vote_weight_; }

  // Relative frequency of tokens at word position t among the hypotheses long
  // enough to reach it (a hypothesis of length L offers EOS at t = L).
  // Uniform over V when no hypothesis reaches t.
  static std::vector<double> positional_vote(std::span<const TokenSeq> nbest, std::size_t t, std::size_t vocab_size);

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

 protected:
  Logits compute(std::span<const TokenId> history, const UtteranceContext& ctx) const override;

 private:
  NgramModel model_;
  double vote_weight_;
};

struct TrainingPair {
  std::vector<TokenSeq> nbest;
  TokenSeq reference;
};

std::unique_ptr<NgramCorrector> train_ngram_corrector(std::shared_ptr<const Vocabulary> vocabulary,
                                                      std::span<const TrainingPair> corpus,
                                                      const CorrectorParams& params);

}  // namespace uadf
