#include "uadf/models.hpp"

#include <fstream>

#include "uadf/acoustic.hpp"
#include "uadf/error.hpp"
#include "uadf/ngram.hpp"
#include "uadf/wire.hpp"

namespace uadf {

ProviderKind parse_provider_kind(const std::string& s) {
  for (auto k : {ProviderKind::kNgramCorrector, ProviderKind::kAcousticChannel, ProviderKind::kExternal}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::kConfiguration, "unknown provider kind '" + s + "'");
}

std::unique_ptr<LogitProvider> provider_from_json(const nlohmann::json& doc, std::shared_ptr<const Vocabulary> vocabulary) {
  if (!doc.is_object() || !doc.contains("kind")) fail(ErrorCode::kSchema, "model document has no 'kind'");
  try {
    if (doc.at("vocab_size").get<std::size_t>() != vocabulary->size() ||
        doc.at("vocab_hash").get<std::string>() != vocabulary->hash()) {
      fail(ErrorCode::kConfiguration, "model was built for a different vocabulary");
    }
    const auto kind = parse_provider_kind(doc.at("kind").get<std::string>());
    switch (kind) {
      case ProviderKind::kNgramCorrector: {
        auto model = NgramModel::from_json(doc.at("ngram"), vocabulary->size());
        return std::make_unique<NgramCorrector>(std::move(vocabulary), std::move(model), doc.at("vote_weight").get<double>());
      }
      case ProviderKind::kAcousticChannel: return AcousticChannel::from_json(doc, std::move(vocabulary));
      default: break;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed model document: ") + e.what());
  }
  fail(ErrorCode::kConfiguration, "model document kind cannot be loaded from a file");
}

std::unique_ptr<LogitProvider> load_provider(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocabulary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open model file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return provider_from_json(doc, std::move(vocabulary));
}

ProviderSpec ProviderSpec::from_json(const nlohmann::json& doc, const std::filesystem::path& base) {
  if (!doc.is_object()) fail(ErrorCode::kConfiguration, "provider spec must be an object");
  ProviderSpec spec;
  try {
    spec.kind = parse_provider_kind(doc.at("kind").get<std::string>());
    if (spec.kind == ProviderKind::kExternal) {
      spec.endpoint = doc.at("endpoint").get<std::string>();
      spec.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 10000));
      if (spec.timeout.count() <= 0) fail(ErrorCode::kConfiguration, "timeout_ms must be positive");
    } else {
      std::filesystem::path model = doc.at("model").get<std::string>();
      spec.model = model.is_relative() && !base.empty() ? base / model : model;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("bad provider spec: ") + e.what());
  }
  return spec;
}

nlohmann::json ProviderSpec::to_json() const {
  if (kind == ProviderKind::kExternal) {
    return {{"kind", to_string(kind)}, {"endpoint", endpoint}, {"timeout_ms", timeout.count()}};
  }
  return {{"kind", to_string(kind)}, {"model", model.string()}};
}

std::unique_ptr<LogitProvider> make_provider(const ProviderSpec& spec, std::shared_ptr<const Vocabulary> vocabulary) {
  if (spec.kind == ProviderKind::kExternal) return connect_external(std::move(vocabulary), spec.endpoint, spec.timeout);
  auto provider = load_provider(spec.model, std::move(vocabulary));
  if (provider->kind() != spec.kind) {
    fail(ErrorCode::kConfiguration, spec.model.string() + " holds a " + to_string(provider->kind()) + " model, not " +
                                        to_string(spec.kind));
  }
  return provider;
}

}  // namespace uadf
