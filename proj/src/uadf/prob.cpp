#include "uadf/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uadf/error.hpp"

namespace uadf {

Logits::Logits(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) fail(ErrorCode::kInvalidInput, "logits must be non-empty");
  for (double v : values_) {
    if (!std::isfinite(v)) fail(ErrorCode::kInvalidInput, "logits contain a non-finite entry");
  }
}

ProbDist::ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) fail(ErrorCode::kInvalidInput, "distribution must be non-empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorCode::kInvalidInput, "distribution has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) fail(ErrorCode::kInvalidInput, "distribution does not sum to 1");
}

ProbDist softmax_with_temperature(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::kInvalidParameter, "temperature must be positive and finite");
  if (logits.empty()) fail(ErrorCode::kInvalidInput, "logits must be non-empty");
  for (double v : logits) {
    if (!std::isfinite(v)) fail(ErrorCode::kInvalidInput, "logits contain a non-finite entry");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - top) / tau);
    sum += out[i];
  }
  // sum >= 1 because the maximizer contributes exp(0).
  for (double& p : out) p /= sum;
  // A second pass keeps the sum inside the ProbDist tolerance for very long vectors.
  const double again = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& p : out) p /= again;
  return ProbDist(std::move(out));
}

ProbDist softmax_with_temperature(const Logits& logits, double tau) {
  return softmax_with_temperature(logits.values(), tau);
}

double entropy(const ProbDist& dist) {
  double h = 0.0;
  for (double p : dist.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  const double upper = std::log(static_cast<double>(dist.size()));
  return std::clamp(h, 0.0, upper);
}

TokenId argmax_token(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kInvalidInput, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

double max_value(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kInvalidInput, "max of an empty vector");
  return *std::max_element(values.begin(), values.end());
}

}  // namespace uadf
