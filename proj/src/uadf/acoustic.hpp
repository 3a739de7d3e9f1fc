#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "uadf/provider.hpp"

namespace uadf {

// Dense V x V row-stochastic matrix. Row o is the distribution over emitted
// tokens when the observation at the current position is o.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n);  // identity
  ConfusionMatrix(std::size_t n, std::vector<double> values);

  std::size_t size() const { return n_; }
  std::span<const double> row(TokenId o) const { return {values_.data() + o * n_, n_}; }
  double at(TokenId from, TokenId to) const { return values_[from * n_ + to]; }
  void set_row(TokenId o, std::span<const double> row);

  // Throws kInvalidInput unless every row is non-negative and sums to 1 within 1e-9.
  void validate() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<double> values_;
};

// Noisy-channel stand-in for a decoder that reads the acoustic observation.
// At word position t the distribution is the confusion row of observation[t]
// (EOS once past the end), mixed with `floor` and renormalized:
//   p(v) = (row[v] + floor) / (1 + V floor)
class AcousticChannel final : public LogitProvider {
 public:
  AcousticChannel(std::shared_ptr<const Vocabulary> vocabulary, ConfusionMatrix confusion, double floor);

  ProviderKind kind() const override { return ProviderKind::kAcousticChannel; }

  const ConfusionMatrix& confusion() const { return confusion_; }
  double floor() const { return floor_; }

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<AcousticChannel> from_json(const nlohmann::json& doc, std::shared_ptr<const Vocabulary> vocabulary);

 protected:
  Logits compute(std::span<const TokenId> history, const UtteranceContext& ctx) const override;

 private:
  ConfusionMatrix confusion_;
  double floor_;
};

std::unique_ptr<AcousticChannel> make_acoustic_channel(std::shared_ptr<const Vocabulary> vocabulary,
                                                       ConfusionMatrix confusion, double floor);

}  // namespace uadf
