#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uadf/provider.hpp"

namespace uadf {

// Raw logits of every teacher-forced decoding step, with the reference token
// each step should have produced. Aggregated across a validation set.
struct TraceSet {
  std::vector<Logits> steps;
  std::vector<TokenId> targets;

  std::size_t size() const { return steps.size(); }
  void append(TraceSet other);
};

struct Utterance {
  UtteranceContext context;
  TokenSeq reference;  // words only; EOS is appended when tracing
};

// Step t is conditioned on BOS + reference[0..t-1]; one step per reference
// token plus the closing EOS.
TraceSet teacher_forced_trace(const LogitProvider& provider, const Utterance& utterance);
TraceSet collect_traces(const LogitProvider& provider, std::span<const Utterance> dataset, std::size_t workers = 1);

// Mean over steps of max softmax(logits / tau).
double mean_confidence(const TraceSet& traces, double tau);
// Fraction of steps whose argmax differs from the target. Temperature-free.
double token_error_rate(const TraceSet& traces);
double token_error_rate(const LogitProvider& provider, std::span<const Utterance> dataset, std::size_t workers = 1);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double confidence = 0.0;  // mean max-probability of the steps in the bin
  double accuracy = 0.0;

  bool operator==(const ReliabilityBin&) const = default;
};

struct Reliability {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
};

// Equal-width bins on [0, 1]; a confidence of exactly 1 falls in the last bin.
Reliability reliability_bins(const TraceSet& traces, double tau, std::size_t n_bins);

struct FitOptions {
  double tol = 1e-3;
  double tau_min = 1e-2;
  double tau_max = 1e2;
  int max_iter = 60;
  std::size_t n_bins = 10;
};

enum class Clamp { kNone, kLower, kUpper };

const char* to_string(Clamp c);

struct CalibrationReport {
  double tau = 1.0;
  double mean_confidence = 0.0;
  double ter = 0.0;
  std::size_t n_dec = 0;
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  Clamp clamped = Clamp::kNone;
  int iterations = 0;
  // Same statistics at tau = 1, for before/after comparison.
  double uncalibrated_confidence = 0.0;
  double uncalibrated_ece = 0.0;

  nlohmann::json to_json() const;
  static CalibrationReport from_json(const nlohmann::json& doc);
};

// Bisects log(tau) until |Conf(tau) - (1 - TER)| <= tol. Conf is monotone
// non-increasing in tau and TER does not depend on tau, so the gap has a
// single sign change inside the bounds when one exists. A target of 1
// (TER = 0) is only reachable in the sharp limit and clamps to tau_min.
CalibrationReport fit_temperature(const TraceSet& traces, const FitOptions& options = {});

// Comma-separated rows: bin_lo,bin_hi,count,confidence,accuracy (with a header line).
std::string bins_to_csv(std::span<const ReliabilityBin> bins);

}  // namespace uadf
