#pragma once

#include <string>

#include "uadf/prob.hpp"

namespace uadf {

enum class FusionMode { kLlmOnly, kAsrOnly, kStatic, kUadf };
enum class Combine { kOuterSoftmax, kRenormalize };
// kEntropy: full-vocabulary Shannon entropy of the calibrated LLM distribution.
// kArgmaxTerm: the single term -p log p of the LLM's most likely token (ablation only).
enum class UncertaintyMeasure { kEntropy, kArgmaxTerm };

const char* to_string(FusionMode m);
const char* to_string(Combine c);
const char* to_string(UncertaintyMeasure u);
FusionMode parse_fusion_mode(const std::string& s);
Combine parse_combine(const std::string& s);
UncertaintyMeasure parse_uncertainty(const std::string& s);

struct FusionConfig {
  FusionMode mode = FusionMode::kUadf;
  double w_llm = 1.0;
  double w_asr = 0.0;  // static mode only
  double tau1 = 1.0;   // LLM temperature
  double tau2 = 1.0;   // ASR temperature
  double beta = 0.5;
  Combine combine = Combine::kOuterSoftmax;
  UncertaintyMeasure uncertainty = UncertaintyMeasure::kEntropy;
};

// Throws kInvalidParameter for configurations the fusion functions would reject.
void validate(const FusionConfig& cfg);

struct FusionStep {
  ProbDist p_llm;
  ProbDist p_asr;
  double uncertainty = 0.0;
  double w_asr_effective = 0.0;
  ProbDist fused;
  TokenId chosen = 0;
};

double sigmoid(double x);

// sigmoid(u) - beta.
double uadf_weight(double u, double beta);

// w_llm softmax(llm / tau1) + w_asr softmax(asr / tau2), renormalized.
ProbDist fuse_static(const Logits& llm, const Logits& asr, const FusionConfig& cfg);

// p_llm = softmax(llm / tau1), u = H(p_llm), w = sigmoid(u) - beta,
// fused = softmax(p_llm + w p_asr) (or the clipped, renormalized sum).
FusionStep fuse_uadf(const Logits& llm, const Logits& asr, const FusionConfig& cfg);

// Dispatches on cfg.mode; single-modality modes pass the calibrated
// distribution through unchanged.
FusionStep fuse(const Logits& llm, const Logits& asr, const FusionConfig& cfg);

}  // namespace uadf
