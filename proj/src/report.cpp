#include "gamver/report.hpp"

#include <fstream>

#include "gamver/errors.hpp"

namespace gamver {

extern const char* const kReportSchemaJson;  // generated from schema/report.schema.json

namespace {

using nlohmann::json;

bool typeMatches(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
  if (type == "number") return value.is_number();
  return false;
}

const json& resolveRef(const json& root, const std::string& ref) {
  constexpr const char* prefix = "#/$defs/";
  if (ref.rfind(prefix, 0) != 0) throw ValidationError("schema: unsupported $ref " + ref);
  const std::string name = ref.substr(std::string(prefix).size());
  const auto it = root.at("$defs").find(name);
  if (it == root.at("$defs").end()) throw ValidationError("schema: missing $def " + name);
  return *it;
}

// Subset of JSON Schema used by schema/report.schema.json: type (string or
// list), const, enum, required, properties, items, $ref, oneOf.
void check(const json& root, const json& schema, const json& value, const std::string& where,
           std::string* error) {
  if (!error->empty()) return;
  if (schema.contains("$ref")) {
    check(root, resolveRef(root, schema.at("$ref").get<std::string>()), value, where, error);
    return;
  }
  if (schema.contains("const")) {
    if (value != schema.at("const")) {
      *error = where + ": expected const " + schema.at("const").dump();
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& allowed : schema.at("enum")) found = found || value == allowed;
    if (!found) {
      *error = where + ": value " + value.dump() + " not in enum";
      return;
    }
  }
  if (schema.contains("type")) {
    const auto& t = schema.at("type");
    bool ok = false;
    if (t.is_string()) {
      ok = typeMatches(value, t.get<std::string>());
    } else {
      for (const auto& option : t) ok = ok || typeMatches(value, option.get<std::string>());
    }
    if (!ok) {
      *error = where + ": type mismatch (expected " + t.dump() + ")";
      return;
    }
  }
  if (schema.contains("required") && value.is_object()) {
    for (const auto& key : schema.at("required")) {
      if (!value.contains(key.get<std::string>())) {
        *error = where + ": missing required key " + key.get<std::string>();
        return;
      }
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema.at("properties").items()) {
      if (value.contains(key)) check(root, sub, value.at(key), where + "/" + key, error);
    }
  }
  if (schema.contains("items") && value.is_array()) {
    int i = 0;
    for (const auto& item : value) {
      check(root, schema.at("items"), item, where + "/" + std::to_string(i++), error);
    }
  }
  if (schema.contains("oneOf")) {
    int matches = 0;
    for (const auto& option : schema.at("oneOf")) {
      std::string sub_error;
      check(root, option, value, where, &sub_error);
      if (sub_error.empty()) matches++;
    }
    if (matches != 1) {
      *error = where + ": matched " + std::to_string(matches) + " oneOf branches (want 1)";
      return;
    }
  }
}

const json& schemaDoc() {
  static const json schema = json::parse(kReportSchemaJson);
  return schema;
}

}  // namespace

nlohmann::json similarityToJson(const SimilarityVector& v) {
  return {{"iou", v.iou},         {"dice", v.dice}, {"ssim", v.ssim},
          {"cosine", v.cosine},   {"pearson", v.pearson},
          {"kl", v.kl},           {"wasserstein", v.wasserstein}};
}

nlohmann::json evalReportToJson(const EvalReport& r) {
  return {
      {"accuracy", r.accuracy},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"rocAuc", r.roc_auc ? nlohmann::json(*r.roc_auc) : nlohmann::json(nullptr)},
      {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
      {"perClass",
       {{{"label", 0}, {"precision", r.precision_class0}, {"recall", r.recall_class0}, {"f1", r.f1_class0}},
        {{"label", 1}, {"precision", r.precision_class1}, {"recall", r.recall_class1}, {"f1", r.f1_class1}}}},
      {"micro",
       {{"precision", r.precision_micro}, {"recall", r.recall_micro}, {"f1", r.f1_micro}}}};
}

nlohmann::json garbageReportToJson(const GarbageClassReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  for (const auto& row : report.rows) {
    rows.push_back({{"class", row.cls},
                    {"precision", opt(row.precision)},
                    {"recall", opt(row.recall)},
                    {"f1", opt(row.f1)},
                    {"support", row.support}});
  }
  return {{"rows", std::move(rows)},
          {"macroAvg",
           {{"precision", report.macro_precision},
            {"recall", report.macro_recall},
            {"f1", report.macro_f1}}},
          {"accuracy", report.accuracy},
          {"testSize", report.test_size},
          {"inDomainAccuracyExtended", report.in_domain_accuracy_extended},
          {"inDomainAccuracyBaseline", report.in_domain_accuracy_baseline}};
}

nlohmann::json makeReport(const std::string& kind, nlohmann::json config) {
  return {{"schemaVersion", 1}, {"kind", kind}, {"config", std::move(config)}};
}

const std::string& reportSchemaText() {
  static const std::string text = kReportSchemaJson;
  return text;
}

void validateReport(const nlohmann::json& doc) {
  std::string error;
  check(schemaDoc(), schemaDoc(), doc, "", &error);
  if (!error.empty()) throw ValidationError("report schema violation at " + error);
}

void writeReport(const std::filesystem::path& path, const nlohmann::json& doc) {
  validateReport(doc);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("writeReport: cannot open " + path.string());
  f << doc.dump(2) << "\n";
  if (!f) throw ValidationError("writeReport: write failed for " + path.string());
}

}  // namespace gamver
