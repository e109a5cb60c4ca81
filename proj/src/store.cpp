#include "advlm/store.hpp"

#include <fstream>

#include "advlm/error.hpp"

namespace advlm {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json row_to_json(const ResultRow& row) {
  ordered_json j;
  j["schema_version"] = kStoreSchemaVersion;
  j["model"] = row.model;
  j["task"] = row.task;
  j["attack"] = row.attack;
  j["epsilon"] = row.epsilon;
  j["strategy"] = row.strategy;
  j["metric"] = row.metric;
  j["value"] = row.value;
  j["samples"] = row.samples;
  j["failed"] = row.failed;
  j["seed"] = row.seed;
  j["config_hash"] = row.config_hash;
  j["timestamp"] = row.timestamp;
  j["version"] = row.version;
  j["status"] = row.status;
  return j;
}

ResultRow row_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("row is not a JSON object");
  const auto version = j.find("schema_version");
  if (version == j.end() || !version->is_number_integer()) throw InvalidArgument("missing schema_version");
  if (version->get<int>() != kStoreSchemaVersion) {
    throw InvalidArgument("schema_version " + std::to_string(version->get<int>()) + " is not supported (expected " +
                          std::to_string(kStoreSchemaVersion) + ")");
  }
  try {
    ResultRow r;
    r.model = j.at("model").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.attack = j.at("attack").get<std::string>();
    r.epsilon = j.at("epsilon").get<double>();
    r.strategy = j.at("strategy").get<std::string>();
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    r.samples = j.at("samples").get<std::size_t>();
    r.failed = j.at("failed").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.version = j.at("version").get<std::string>();
    r.status = j.at("status").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad row: ") + e.what());
  }
}

void persist_rows(std::span<const ResultRow> rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::string text;
  for (const auto& r : rows) text += row_to_json(r).dump() + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw InvalidArgument("cannot open result store " + path.string());
  out << text;
  out.flush();
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

LoadedRows load_rows(const std::filesystem::path& path, bool tolerant) {
  LoadedRows out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::string problem;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      problem = "corrupt line (byte offset " + std::to_string(start) + ")";
    } else {
      try {
        out.rows.push_back(row_from_json(j));
        continue;
      } catch (const InvalidArgument& e) {
        problem = std::string(e.what()) + " (byte offset " + std::to_string(start) + ")";
      }
    }
    if (!tolerant) throw FormatError(path.string(), lineno, problem);
    out.issues.push_back({lineno, start, problem});
  }
  return out;
}

}  // namespace advlm
