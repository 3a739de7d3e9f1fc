#include "uadf/ngram.hpp"

#include <cmath>
#include <fstream>

#include "uadf/error.hpp"

namespace uadf {

NgramModel::NgramModel(std::size_t vocab_size, int order, double smoothing)
    : vocab_size_(vocab_size), order_(order), smoothing_(smoothing) {
  if (order < 1) fail(ErrorCode::kInvalidParameter, "n-gram order must be >= 1");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) fail(ErrorCode::kInvalidParameter, "smoothing must be >= 0");
  if (vocab_size < 3) fail(ErrorCode::kInvalidParameter, "vocabulary too small");
}

void NgramModel::add_sentence(std::span<const TokenId> words) {
  TokenSeq seq;
  seq.reserve(words.size() + 2);
  seq.push_back(kBos);
  for (TokenId w : words) {
    if (w >= vocab_size_) fail(ErrorCode::kInvalidInput, "training token out of range");
    if (w == kBos || w == kEos) continue;
    seq.push_back(w);
  }
  seq.push_back(kEos);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    for (int j = 1; j <= order_; ++j) {
      const std::size_t ctx_len = static_cast<std::size_t>(j - 1);
      if (ctx_len > i) break;
      TokenSeq ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - ctx_len), seq.begin() + static_cast<std::ptrdiff_t>(i));
      Row& row = rows_[ctx];
      row.total += 1;
      row.next[seq[i]] += 1;
    }
  }
}

const NgramModel::Row* NgramModel::find_context(std::span<const TokenId> history) const {
  std::size_t len = std::min<std::size_t>(history.size(), static_cast<std::size_t>(order_ - 1));
  for (;; --len) {
    TokenSeq ctx(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
    auto it = rows_.find(ctx);
    if (it != rows_.end() && it->second.total > 0) return &it->second;
    if (len == 0) return nullptr;
  }
}

void NgramModel::distribution(std::span<const TokenId> history, std::span<double> out) const {
  if (out.size() != vocab_size_) fail(ErrorCode::kInvalidInput, "distribution buffer has the wrong length");
  const Row* row = find_context(history);
  if (row == nullptr) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(vocab_size_));
    return;
  }
  const double denom = static_cast<double>(row->total) + smoothing_ * static_cast<double>(vocab_size_);
  std::fill(out.begin(), out.end(), smoothing_ / denom);
  for (const auto& [tok, count] : row->next) out[tok] = (static_cast<double>(count) + smoothing_) / denom;
}

double NgramModel::prob(std::span<const TokenId> history, TokenId next) const {
  const Row* row = find_context(history);
  if (row == nullptr) return 1.0 / static_cast<double>(vocab_size_);
  const double denom = static_cast<double>(row->total) + smoothing_ * static_cast<double>(vocab_size_);
  auto it = row->next.find(next);
  const double count = it == row->next.end() ? 0.0 : static_cast<double>(it->second);
  return (count + smoothing_) / denom;
}

double NgramModel::sentence_log_prob(std::span<const TokenId> words) const {
  TokenSeq hist{kBos};
  double total = 0.0;
  for (TokenId w : words) {
    total += safe_log(prob(hist, w));
    hist.push_back(w);
  }
  return total + safe_log(prob(hist, kEos));
}

nlohmann::json NgramModel::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [ctx, row] : rows_) {
    nlohmann::json next = nlohmann::json::array();
    for (const auto& [tok, count] : row.next) next.push_back({tok, count});
    rows.push_back({{"context", ctx}, {"next", std::move(next)}});
  }
  return {{"order", order_}, {"smoothing", smoothing_}, {"rows", std::move(rows)}};
}

NgramModel NgramModel::from_json(const nlohmann::json& doc, std::size_t vocab_size) {
  try {
    NgramModel model(vocab_size, doc.at("order").get<int>(), doc.at("smoothing").get<double>());
    for (const auto& r : doc.at("rows")) {
      auto ctx = r.at("context").get<TokenSeq>();
      Row row;
      for (const auto& pair : r.at("next")) {
        const auto tok = pair.at(0).get<TokenId>();
        const auto count = pair.at(1).get<std::uint64_t>();
        if (tok >= vocab_size) fail(ErrorCode::kSchema, "n-gram token id out of range");
        row.next[tok] = count;
        row.total += count;
      }
      model.rows_[std::move(ctx)] = std::move(row);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed n-gram model: ") + e.what());
  }
}

NgramCorrector::NgramCorrector(std::shared_ptr<const Vocabulary> vocabulary, NgramModel model, double vote_weight)
    : LogitProvider(std::move(vocabulary)), model_(std::move(model)), vote_weight_(vote_weight) {
  if (!(vote_weight >= 0.0 && vote_weight <= 1.0)) fail(ErrorCode::kInvalidParameter, "vote weight must lie in [0, 1]");
  if (model_.vocab_size() != vocab_size()) fail(ErrorCode::kConfiguration, "n-gram model and vocabulary sizes differ");
}

std::vector<double> NgramCorrector::positional_vote(std::span<const TokenSeq> nbest, std::size_t t,
                                                    std::size_t vocab_size) {
  std::vector<double> vote(vocab_size, 0.0);
  std::size_t reaching = 0;
  for (const auto& h : nbest) {
    if (t < h.size()) {
      vote[h[t]] += 1.0;
      ++reaching;
    } else if (t == h.size()) {
      vote[kEos] += 1.0;
      ++reaching;
    }
  }
  if (reaching == 0) {
    std::fill(vote.begin(), vote.end(), 1.0 / static_cast<double>(vocab_size));
  } else {
    for (double& v : vote) v /= static_cast<double>(reaching);
  }
  return vote;
}

Logits NgramCorrector::compute(std::span<const TokenId> history, const UtteranceContext& ctx) const {
  const std::size_t v = vocab_size();
  std::vector<double> mix(v);
  model_.distribution(history, mix);
  const std::size_t t = history.size() - 1;
  if (vote_weight_ > 0.0) {
    const auto vote = positional_vote(ctx.nbest, t, v);
    for (std::size_t i = 0; i < v; ++i) mix[i] = (1.0 - vote_weight_) * mix[i] + vote_weight_ * vote[i];
  }
  for (double& m : mix) m = safe_log(m);
  return Logits(std::move(mix));
}

nlohmann::json NgramCorrector::to_json() const {
  return {{"kind", to_string(kind())},
          {"vocab_size", vocab_size()},
          {"vocab_hash", vocabulary().hash()},
          {"vote_weight", vote_weight_},
          {"ngram", model_.to_json()}};
}

void NgramCorrector::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write model file " + path.string());
  out << to_json().dump() << '\n';
}

std::unique_ptr<NgramCorrector> train_ngram_corrector(std::shared_ptr<const Vocabulary> vocabulary,
                                                      std::span<const TrainingPair> corpus,
                                                      const CorrectorParams& params) {
  if (corpus.empty()) fail(ErrorCode::kInvalidInput, "training corpus is empty");
  if (!vocabulary) fail(ErrorCode::kConfiguration, "training requires a vocabulary");
  NgramModel model(vocabulary->size(), params.order, params.smoothing);
  for (const auto& pair : corpus) model.add_sentence(pair.reference);
  return std::make_unique<NgramCorrector>(std::move(vocabulary), std::move(model), params.vote_weight);
}

}  // namespace uadf
