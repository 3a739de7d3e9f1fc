#include "uadf/calibration.hpp"

#include <cmath>
#include <sstream>

#include "uadf/error.hpp"
#include "uadf/parallel.hpp"
#include "uadf/wire.hpp"

namespace uadf {

void TraceSet::append(TraceSet other) {
  steps.insert(steps.end(), std::make_move_iterator(other.steps.begin()), std::make_move_iterator(other.steps.end()));
  targets.insert(targets.end(), other.targets.begin(), other.targets.end());
}

TraceSet teacher_forced_trace(const LogitProvider& provider, const Utterance& utterance) {
  TokenSeq target = utterance.reference;
  if (!target.empty() && target.back() == kEos) target.pop_back();
  target.push_back(kEos);
  TraceSet out;
  out.steps.reserve(target.size());
  TokenSeq history{kBos};
  for (TokenId tok : target) {
    out.steps.push_back(provider.next_logits(history, utterance.context));
    out.targets.push_back(tok);
    history.push_back(tok);
  }
  return out;
}

TraceSet collect_traces(const LogitProvider& provider, std::span<const Utterance> dataset, std::size_t workers) {
  std::vector<TraceSet> parts(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) { parts[i] = teacher_forced_trace(provider, dataset[i]); });
  TraceSet all;
  for (auto& p : parts) all.append(std::move(p));
  return all;
}

double mean_confidence(const TraceSet& traces, double tau) {
  if (traces.steps.empty()) fail(ErrorCode::kInvalidInput, "no decoding steps to measure confidence on");
  double sum = 0.0;
  for (const auto& logits : traces.steps) sum += max_value(softmax_with_temperature(logits, tau).probs());
  return sum / static_cast<double>(traces.steps.size());
}

double token_error_rate(const TraceSet& traces) {
  if (traces.steps.empty()) fail(ErrorCode::kInvalidInput, "no decoding steps to measure TER on");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < traces.steps.size(); ++i) {
    if (argmax_token(traces.steps[i]) != traces.targets[i]) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(traces.steps.size());
}

double token_error_rate(const LogitProvider& provider, std::span<const Utterance> dataset, std::size_t workers) {
  if (dataset.empty()) fail(ErrorCode::kInvalidInput, "empty dataset");
  return token_error_rate(collect_traces(provider, dataset, workers));
}

Reliability reliability_bins(const TraceSet& traces, double tau, std::size_t n_bins) {
  if (n_bins < 2) fail(ErrorCode::kInvalidParameter, "need at least two reliability bins");
  Reliability out;
  out.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::size_t> correct(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    out.bins[b].lower = static_cast<double>(b) / static_cast<double>(n_bins);
    out.bins[b].upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
  }
  for (std::size_t i = 0; i < traces.steps.size(); ++i) {
    const auto p = softmax_with_temperature(traces.steps[i], tau);
    const double c = max_value(p.probs());
    const auto b = std::min(n_bins - 1, static_cast<std::size_t>(c * static_cast<double>(n_bins)));
    out.bins[b].count += 1;
    conf_sum[b] += c;
    if (argmax_token(p) == traces.targets[i]) correct[b] += 1;
  }
  const double n = static_cast<double>(traces.steps.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = out.bins[b];
    if (bin.count == 0) continue;
    bin.confidence = conf_sum[b] / static_cast<double>(bin.count);
    bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(bin.count);
    out.ece += (static_cast<double>(bin.count) / n) * std::abs(bin.confidence - bin.accuracy);
  }
  return out;
}

const char* to_string(Clamp c) {
  switch (c) {
    case Clamp::kNone: return "none";
    case Clamp::kLower: return "tau_min";
    case Clamp::kUpper: return "tau_max";
  }
  return "none";
}

CalibrationReport fit_temperature(const TraceSet& traces, const FitOptions& options) {
  if (!(options.tau_min > 0.0) || !(options.tau_min < options.tau_max)) {
    fail(ErrorCode::kInvalidParameter, "temperature bounds must satisfy 0 < tau_min < tau_max");
  }
  if (!(options.tol > 0.0)) fail(ErrorCode::kInvalidParameter, "tolerance must be positive");
  if (options.max_iter < 1) fail(ErrorCode::kInvalidParameter, "max_iter must be >= 1");
  if (traces.steps.empty()) fail(ErrorCode::kInvalidInput, "no decoding steps to calibrate on");

  CalibrationReport report;
  report.n_dec = traces.size();
  report.ter = token_error_rate(traces);
  const double target = 1.0 - report.ter;

  auto finish = [&](double tau) {
    report.tau = tau;
    report.mean_confidence = mean_confidence(traces, tau);
    auto rel = reliability_bins(traces, tau, options.n_bins);
    report.bins = std::move(rel.bins);
    report.ece = rel.ece;
    report.uncalibrated_confidence = mean_confidence(traces, 1.0);
    report.uncalibrated_ece = reliability_bins(traces, 1.0, options.n_bins).ece;
    return report;
  };

  if (report.ter == 0.0) {
    report.clamped = Clamp::kLower;
    return finish(options.tau_min);
  }
  const double conf_lo = mean_confidence(traces, options.tau_min);
  if (conf_lo < target - options.tol) {
    report.clamped = Clamp::kLower;
    return finish(options.tau_min);
  }
  const double conf_hi = mean_confidence(traces, options.tau_max);
  if (conf_hi > target + options.tol) {
    report.clamped = Clamp::kUpper;
    return finish(options.tau_max);
  }
  double lo = std::log(options.tau_min);
  double hi = std::log(options.tau_max);
  double mid = 0.5 * (lo + hi);
  for (report.iterations = 1; report.iterations <= options.max_iter; ++report.iterations) {
    mid = 0.5 * (lo + hi);
    const double gap = mean_confidence(traces, std::exp(mid)) - target;
    if (std::abs(gap) <= options.tol) break;
    if (gap > 0.0) {
      lo = mid;  // still overconfident: flatten more
    } else {
      hi = mid;
    }
  }
  report.iterations = std::min(report.iterations, options.max_iter);
  return finish(std::exp(mid));
}

std::string bins_to_csv(std::span<const ReliabilityBin> bins) {
  std::string out = "bin_lo,bin_hi,count,confidence,accuracy\n";
  for (const auto& b : bins) {
    out += format_double(b.lower) + ',' + format_double(b.upper) + ',' + std::to_string(b.count) + ',' +
           format_double(b.confidence) + ',' + format_double(b.accuracy) + '\n';
  }
  return out;
}

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json jbins = nlohmann::json::array();
  for (const auto& b : bins) {
    jbins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}, {"confidence", b.confidence},
                     {"accuracy", b.accuracy}});
  }
  return {{"tau", tau},
          {"mean_confidence", mean_confidence},
          {"ter", ter},
          {"n_dec", n_dec},
          {"ece", ece},
          {"clamped", to_string(clamped)},
          {"iterations", iterations},
          {"uncalibrated_confidence", uncalibrated_confidence},
          {"uncalibrated_ece", uncalibrated_ece},
          {"bins", std::move(jbins)}};
}

CalibrationReport CalibrationReport::from_json(const nlohmann::json& doc) {
  try {
    CalibrationReport r;
    r.tau = doc.at("tau").get<double>();
    if (!(r.tau > 0.0)) fail(ErrorCode::kSchema, "calibration report has a non-positive tau");
    r.mean_confidence = doc.at("mean_confidence").get<double>();
    r.ter = doc.at("ter").get<double>();
    r.n_dec = doc.at("n_dec").get<std::size_t>();
    r.ece = doc.at("ece").get<double>();
    const auto clamp = doc.at("clamped").get<std::string>();
    r.clamped = clamp == "tau_min" ? Clamp::kLower : clamp == "tau_max" ? Clamp::kUpper : Clamp::kNone;
    r.iterations = doc.value("iterations", 0);
    r.uncalibrated_confidence = doc.value("uncalibrated_confidence", 0.0);
    r.uncalibrated_ece = doc.value("uncalibrated_ece", 0.0);
    for (const auto& b : doc.at("bins")) {
      r.bins.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("count").get<std::size_t>(),
                        b.at("confidence").get<double>(), b.at("accuracy").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed calibration report: ") + e.what());
  }
}

}  // namespace uadf
