#include "uadf/fusion.hpp"

#include <cmath>

#include "uadf/error.hpp"

namespace uadf {

const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kLlmOnly: return "llm";
    case FusionMode::kAsrOnly: return "asr";
    case FusionMode::kStatic: return "static";
    case FusionMode::kUadf: return "uadf";
  }
  return "uadf";
}

const char* to_string(Combine c) { return c == Combine::kOuterSoftmax ? "outer-softmax" : "renormalize"; }

const char* to_string(UncertaintyMeasure u) { return u == UncertaintyMeasure::kEntropy ? "entropy" : "argmax-term"; }

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "llm" || s == "llm-only") return FusionMode::kLlmOnly;
  if (s == "asr" || s == "asr-only") return FusionMode::kAsrOnly;
  if (s == "static") return FusionMode::kStatic;
  if (s == "uadf") return FusionMode::kUadf;
  fail(ErrorCode::kInvalidParameter, "unknown fusion mode '" + s + "'");
}

Combine parse_combine(const std::string& s) {
  if (s == "outer-softmax") return Combine::kOuterSoftmax;
  if (s == "renormalize") return Combine::kRenormalize;
  fail(ErrorCode::kInvalidParameter, "unknown combine rule '" + s + "'");
}

UncertaintyMeasure parse_uncertainty(const std::string& s) {
  if (s == "entropy") return UncertaintyMeasure::kEntropy;
  if (s == "argmax-term") return UncertaintyMeasure::kArgmaxTerm;
  fail(ErrorCode::kInvalidParameter, "unknown uncertainty measure '" + s + "'");
}

void validate(const FusionConfig& cfg) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!(cfg.tau1 > 0.0) || !finite(cfg.tau1) || !(cfg.tau2 > 0.0) || !finite(cfg.tau2)) {
    fail(ErrorCode::kInvalidParameter, "temperatures must be positive");
  }
  if (!finite(cfg.beta) || cfg.beta < 0.0 || cfg.beta > 1.0) fail(ErrorCode::kInvalidParameter, "beta must lie in [0, 1]");
  if (cfg.mode == FusionMode::kStatic) {
    if (!finite(cfg.w_llm) || !finite(cfg.w_asr) || cfg.w_asr < 0.0 || cfg.w_llm < 0.0) {
      fail(ErrorCode::kInvalidParameter, "static weights must be finite and non-negative");
    }
    if (cfg.w_llm == 0.0 && cfg.w_asr == 0.0) fail(ErrorCode::kInvalidParameter, "static weights are both zero");
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double uadf_weight(double u, double beta) { return sigmoid(u) - beta; }

ProbDist fuse_static(const Logits& llm, const Logits& asr, const FusionConfig& cfg) {
  if (llm.size() != asr.size()) fail(ErrorCode::kInvalidInput, "logit vectors differ in length");
  if (cfg.w_llm == 0.0 && cfg.w_asr == 0.0) fail(ErrorCode::kInvalidParameter, "static weights are both zero");
  if (cfg.w_llm < 0.0 || cfg.w_asr < 0.0) fail(ErrorCode::kInvalidParameter, "static weights must be non-negative");
  const auto p_llm = softmax_with_temperature(llm, cfg.tau1);
  const auto p_asr = softmax_with_temperature(asr, cfg.tau2);
  std::vector<double> sum(llm.size());
  double total = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    sum[i] = cfg.w_llm * p_llm[i] + cfg.w_asr * p_asr[i];
    total += sum[i];
  }
  for (double& s : sum) s /= total;
  return ProbDist(std::move(sum));
}

namespace {

double llm_uncertainty(const ProbDist& p, UncertaintyMeasure measure) {
  if (measure == UncertaintyMeasure::kEntropy) return entropy(p);
  const double top = p[argmax_token(p)];
  return top > 0.0 ? -top * std::log(top) : 0.0;
}

ProbDist renormalize_clipped(std::vector<double> v) {
  double total = 0.0;
  for (double& x : v) {
    x = std::max(x, 0.0);
    total += x;
  }
  for (double& x : v) x /= total;
  return ProbDist(std::move(v));
}

}  // namespace

FusionStep fuse_uadf(const Logits& llm, const Logits& asr, const FusionConfig& cfg) {
  if (llm.size() != asr.size()) fail(ErrorCode::kInvalidInput, "logit vectors differ in length");
  FusionStep step;
  step.p_llm = softmax_with_temperature(llm, cfg.tau1);
  step.p_asr = softmax_with_temperature(asr, cfg.tau2);
  step.uncertainty = llm_uncertainty(step.p_llm, cfg.uncertainty);
  step.w_asr_effective = uadf_weight(step.uncertainty, cfg.beta);
  std::vector<double> sum(llm.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = step.p_llm[i] + step.w_asr_effective * step.p_asr[i];
  // The sum is 1 + w >= 0.5 > 0, so the clipped vector always has positive mass.
  step.fused = cfg.combine == Combine::kOuterSoftmax ? softmax_with_temperature(sum, 1.0) : renormalize_clipped(std::move(sum));
  step.chosen = argmax_token(step.fused);
  return step;
}

FusionStep fuse(const Logits& llm, const Logits& asr, const FusionConfig& cfg) {
  switch (cfg.mode) {
    case FusionMode::kUadf: return fuse_uadf(llm, asr, cfg);
    case FusionMode::kStatic: {
      FusionStep step;
      step.p_llm = softmax_with_temperature(llm, cfg.tau1);
      step.p_asr = softmax_with_temperature(asr, cfg.tau2);
      step.w_asr_effective = cfg.w_asr;
      step.fused = fuse_static(llm, asr, cfg);
      step.chosen = argmax_token(step.fused);
      return step;
    }
    case FusionMode::kLlmOnly: {
      FusionStep step;
      step.p_llm = softmax_with_temperature(llm, cfg.tau1);
      step.p_asr = softmax_with_temperature(asr, cfg.tau2);
      step.uncertainty = llm_uncertainty(step.p_llm, cfg.uncertainty);
      step.fused = step.p_llm;
      step.chosen = argmax_token(llm);
      return step;
    }
    case FusionMode::kAsrOnly: {
      FusionStep step;
      step.p_llm = softmax_with_temperature(llm, cfg.tau1);
      step.p_asr = softmax_with_temperature(asr, cfg.tau2);
      step.uncertainty = llm_uncertainty(step.p_llm, cfg.uncertainty);
      step.fused = step.p_asr;
      step.chosen = argmax_token(asr);
      return step;
    }
  }
  fail(ErrorCode::kInvalidParameter, "unknown fusion mode");
}

}  // namespace uadf
