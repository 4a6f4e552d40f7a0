#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "gamver/forest.hpp"
#include "gamver/verifier.hpp"

// JSON report emission. Every report carries schemaVersion, kind and the
// echoed effective config, and is checked against the shipped schema before
// it is written.

namespace gamver {

nlohmann::json similarityToJson(const SimilarityVector& v);
nlohmann::json evalReportToJson(const EvalReport& report);
nlohmann::json garbageReportToJson(const GarbageClassReport& report);

// Skeleton with schemaVersion, kind and config.
nlohmann::json makeReport(const std::string& kind, nlohmann::json config);

// The same document as schema/report.schema.json.
const std::string& reportSchemaText();

// Structural validation against the shipped schema subset; throws
// ValidationError with a JSON-pointer-ish location on failure.
void validateReport(const nlohmann::json& doc);

void writeReport(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace gamver
