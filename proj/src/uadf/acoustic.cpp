#include "uadf/acoustic.hpp"

#include <cmath>
#include <fstream>

#include "uadf/error.hpp"

namespace uadf {

ConfusionMatrix::ConfusionMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {
  for (std::size_t i = 0; i < n; ++i) values_[i * n + i] = 1.0;
}

ConfusionMatrix::ConfusionMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
  if (values_.size() != n * n) fail(ErrorCode::kInvalidInput, "confusion matrix must be V x V");
}

void ConfusionMatrix::set_row(TokenId o, std::span<const double> row) {
  if (o >= n_ || row.size() != n_) fail(ErrorCode::kInvalidInput, "confusion row has the wrong shape");
  std::copy(row.begin(), row.end(), values_.begin() + static_cast<std::ptrdiff_t>(o * n_));
}

void ConfusionMatrix::validate() const {
  for (std::size_t r = 0; r < n_; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < n_; ++c) {
      const double p = values_[r * n_ + c];
      if (!(p >= 0.0) || !std::isfinite(p)) {
        fail(ErrorCode::kInvalidInput, "confusion row " + std::to_string(r) + " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      fail(ErrorCode::kInvalidInput, "confusion row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

AcousticChannel::AcousticChannel(std::shared_ptr<const Vocabulary> vocabulary, ConfusionMatrix confusion, double floor)
    : LogitProvider(std::move(vocabulary)), confusion_(std::move(confusion)), floor_(floor) {
  if (!(floor >= 0.0) || !std::isfinite(floor)) fail(ErrorCode::kInvalidParameter, "floor must be >= 0");
  if (confusion_.size() != vocab_size()) fail(ErrorCode::kConfiguration, "confusion matrix and vocabulary sizes differ");
  confusion_.validate();
}

Logits AcousticChannel::compute(std::span<const TokenId> history, const UtteranceContext& ctx) const {
  const std::size_t t = history.size() - 1;
  const TokenId observed = t < ctx.observation.size() ? ctx.observation[t] : kEos;
  const auto row = confusion_.row(observed);
  const double v = static_cast<double>(vocab_size());
  const double norm = 1.0 + v * floor_;
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = safe_log((row[i] + floor_) / norm);
  return Logits(std::move(out));
}

nlohmann::json AcousticChannel::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (TokenId r = 0; r < confusion_.size(); ++r) {
    nlohmann::json entries = nlohmann::json::array();
    const auto row = confusion_.row(r);
    for (TokenId c = 0; c < row.size(); ++c) {
      if (row[c] != 0.0) entries.push_back({c, row[c]});
    }
    rows.push_back(std::move(entries));
  }
  return {{"kind", to_string(kind())},
          {"vocab_size", vocab_size()},
          {"vocab_hash", vocabulary().hash()},
          {"floor", floor_},
          {"confusion", std::move(rows)}};
}

void AcousticChannel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write model file " + path.string());
  out << to_json().dump() << '\n';
}

std::unique_ptr<AcousticChannel> AcousticChannel::from_json(const nlohmann::json& doc,
                                                            std::shared_ptr<const Vocabulary> vocabulary) {
  try {
    const std::size_t v = vocabulary->size();
    const auto& rows = doc.at("confusion");
    if (rows.size() != v) fail(ErrorCode::kConfiguration, "confusion matrix and vocabulary sizes differ");
    std::vector<double> values(v * v, 0.0);
    for (std::size_t r = 0; r < v; ++r) {
      for (const auto& entry : rows[r]) {
        const auto c = entry.at(0).get<std::size_t>();
        if (c >= v) fail(ErrorCode::kSchema, "confusion column out of range");
        values[r * v + c] = entry.at(1).get<double>();
      }
    }
    return std::make_unique<AcousticChannel>(std::move(vocabulary), ConfusionMatrix(v, std::move(values)),
                                             doc.at("floor").get<double>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed acoustic model: ") + e.what());
  }
}

std::unique_ptr<AcousticChannel> make_acoustic_channel(std::shared_ptr<const Vocabulary> vocabulary,
                                                       ConfusionMatrix confusion, double floor) {
  return std::make_unique<AcousticChannel>(std::move(vocabulary), std::move(confusion), floor);
}

}  // namespace uadf
