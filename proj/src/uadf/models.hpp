#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "uadf/provider.hpp"

namespace uadf {

// Rebuilds a built-in provider from its saved document. The document's
// "kind" selects the implementation; its vocabulary size and hash must match.
std::unique_ptr<LogitProvider> provider_from_json(const nlohmann::json& doc, std::shared_ptr<const Vocabulary> vocabulary);
std::unique_ptr<LogitProvider> load_provider(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocabulary);

// Where a modality's provider comes from: a saved model file or an external endpoint.
struct ProviderSpec {
  ProviderKind kind = ProviderKind::kNgramCorrector;
  std::filesystem::path model;  // built-in kinds
  std::string endpoint;         // external
  std::chrono::milliseconds timeout{10000};

  // {"kind": "ngram-corrector" | "acoustic-channel", "model": path}
  // {"kind": "external", "endpoint": "tcp://host:port" | command, "timeout_ms": n}
  // Relative model paths resolve against `base`.
  static ProviderSpec from_json(const nlohmann::json& doc, const std::filesystem::path& base = {});
  nlohmann::json to_json() const;
};

ProviderKind parse_provider_kind(const std::string& s);

std::unique_ptr<LogitProvider> make_provider(const ProviderSpec& spec, std::shared_ptr<const Vocabulary> vocabulary);

}  // namespace uadf
