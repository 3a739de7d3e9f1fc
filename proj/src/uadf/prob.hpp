#pragma once

#include <span>
#include <vector>

#include "uadf/vocabulary.hpp"

namespace uadf {

// Raw per-step scores over the vocabulary. All entries finite.
class Logits {
 public:
  Logits() = default;
  explicit Logits(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const Logits&) const = default;

 private:
  std::vector<double> values_;
};

// Normalized distribution: entries >= 0, sum within 1e-9 of 1.
class ProbDist {
 public:
  ProbDist() = default;
  explicit ProbDist(std::vector<double> probs);

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  bool operator==(const ProbDist&) const = default;

 private:
  std::vector<double> probs_;
};

inline constexpr double kSumTolerance = 1e-9;

// softmax(logits / tau) with max subtraction and a final renormalization.
ProbDist softmax_with_temperature(const Logits& logits, double tau);
ProbDist softmax_with_temperature(std::span<const double> logits, double tau);

// Shannon entropy in nats, 0 ln 0 := 0. Result clamped into [0, ln V].
double entropy(const ProbDist& dist);

// Lowest-id maximizer.
TokenId argmax_token(std::span<const double> values);
inline TokenId argmax_token(const ProbDist& dist) { return argmax_token(dist.probs()); }
inline TokenId argmax_token(const Logits& logits) { return argmax_token(logits.values()); }

double max_value(std::span<const double> values);

}  // namespace uadf
