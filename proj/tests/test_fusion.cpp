#include <doctest.h>

#include <cmath>

#include "uadf/error.hpp"
#include "uadf/fusion.hpp"

using namespace uadf;

namespace {

// Logits whose tau-1 softmax is exactly p (up to rounding).
Logits logits_for(std::vector<double> p) {
  for (double& x : p) x = std::log(x);
  return Logits(std::move(p));
}

FusionConfig static_config(double w_llm, double w_asr) {
  FusionConfig cfg;
  cfg.mode = FusionMode::kStatic;
  cfg.w_llm = w_llm;
  cfg.w_asr = w_asr;
  return cfg;
}

}  // namespace

TEST_CASE("uadf weight examples") {
  CHECK(uadf_weight(0.0, 0.5) == 0.0);
  CHECK(std::abs(uadf_weight(9.91, 0.5) - 0.49995) < 1e-4);
  CHECK(std::abs(uadf_weight(std::log(2.0), 0.0) - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("static fusion examples") {
  auto p = fuse_static(logits_for({0.8, 0.2}), logits_for({0.2, 0.8}), static_config(1, 1));
  CHECK(std::abs(p[0] - 0.5) < 1e-12);
  CHECK(std::abs(p[1] - 0.5) < 1e-12);

  p = fuse_static(logits_for({0.6, 0.4}), logits_for({0.1, 0.9}), static_config(4, 1));
  CHECK(std::abs(p[0] - (4 * 0.6 + 0.1) / 5) < 1e-12);
  CHECK(std::abs(p[1] - (4 * 0.4 + 0.9) / 5) < 1e-12);
  CHECK(std::abs(p[0] - 0.5) < 1e-12);
}

TEST_CASE("static fusion with zero ASR weight is the calibrated LLM distribution") {
  Logits llm({2.0, 0.5, -1.0});
  Logits asr({-3.0, 4.0, 0.0});
  auto cfg = static_config(1, 0);
  cfg.tau1 = 1.7;
  const auto p = fuse_static(llm, asr, cfg);
  const auto expected = softmax_with_temperature(llm, 1.7);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p[i] - expected[i]) < 1e-15);
}

TEST_CASE("uadf bypasses the ASR when the LLM is certain") {
  FusionConfig cfg;
  const auto step = fuse_uadf(Logits({0.0, 900.0, 0.0}), Logits({50.0, 0.0, 0.0}), cfg);
  CHECK(step.uncertainty == 0.0);
  CHECK(step.w_asr_effective == 0.0);
  CHECK(step.chosen == 1);
}

TEST_CASE("uadf two-token example") {
  FusionConfig cfg;
  const auto step = fuse_uadf(logits_for({0.5, 0.5}), logits_for({0.9, 0.1}), cfg);
  const double w = 1.0 / (1.0 + std::exp(-std::log(2.0))) - 0.5;
  CHECK(std::abs(step.uncertainty - std::log(2.0)) < 1e-12);
  CHECK(std::abs(step.w_asr_effective - 0.16661) < 1e-4);
  CHECK(std::abs(step.w_asr_effective - w) < 1e-12);
  // Outer softmax over the sums [0.5 + 0.9w, 0.5 + 0.1w].
  const double s0 = 0.5 + 0.9 * w, s1 = 0.5 + 0.1 * w;
  CHECK(std::abs(s0 - 0.64995) < 1e-4);
  CHECK(std::abs(s1 - 0.51666) < 1e-4);
  const double z = std::exp(s0) + std::exp(s1);
  CHECK(std::abs(step.fused[0] - std::exp(s0) / z) < 1e-12);
  CHECK(step.chosen == 0);
}

TEST_CASE("uadf overturns an unsure LLM when the ASR is sharp") {
  // Near-uniform LLM over 8 tokens leaning slightly to token 3; ASR Dirac on token 5.
  std::vector<double> p(8, 0.12);
  p[3] = 0.16;
  Logits llm = logits_for(p);
  std::vector<double> asr(8, 0.0);
  asr[5] = 60.0;
  FusionConfig cfg;
  const auto step = fuse_uadf(llm, Logits(asr), cfg);
  CHECK(argmax_token(step.p_llm) == 3);
  CHECK(step.p_llm[3] - step.p_llm[5] < step.w_asr_effective);
  CHECK(step.chosen == 5);

  cfg.mode = FusionMode::kLlmOnly;
  CHECK(fuse(llm, Logits(asr), cfg).chosen == 3);
}

TEST_CASE("renormalize combine clips negative mass") {
  FusionConfig cfg;
  cfg.combine = Combine::kRenormalize;
  cfg.beta = 1.0;  // w = sigmoid(u) - 1 < 0
  const auto step = fuse_uadf(logits_for({0.4, 0.35, 0.25}), logits_for({0.01, 0.01, 0.98}), cfg);
  const double w = step.w_asr_effective;
  CHECK(w < 0.0);
  std::vector<double> s = {0.4 + w * 0.01, 0.35 + w * 0.01, std::max(0.0, 0.25 + w * 0.98)};
  const double total = s[0] + s[1] + s[2];
  for (int i = 0; i < 3; ++i) CHECK(std::abs(step.fused[i] - s[i] / total) < 1e-12);
}

TEST_CASE("argmax-term uncertainty uses only the top token") {
  FusionConfig cfg;
  cfg.uncertainty = UncertaintyMeasure::kArgmaxTerm;
  const auto step = fuse_uadf(logits_for({0.7, 0.2, 0.1}), logits_for({0.2, 0.3, 0.5}), cfg);
  CHECK(std::abs(step.uncertainty - (-0.7 * std::log(0.7))) < 1e-12);
}

TEST_CASE("config validation") {
  FusionConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.tau1 = 0.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = FusionConfig{};
  cfg.beta = 1.5;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = static_config(0, 0);
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = static_config(-1, 1);
  CHECK_THROWS_AS(validate(cfg), Error);
  CHECK(parse_fusion_mode("uadf") == FusionMode::kUadf);
  CHECK(parse_combine("renormalize") == Combine::kRenormalize);
  CHECK_THROWS_AS(parse_fusion_mode("average"), Error);
}

TEST_CASE("mismatched logit lengths are rejected") {
  FusionConfig cfg;
  CHECK_THROWS_AS(fuse_uadf(Logits({1.0, 2.0}), Logits({1.0}), cfg), Error);
}
