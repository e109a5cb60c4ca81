#ifndef ADVLM_STORE_HPP_
#define ADVLM_STORE_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlm/report.hpp"

namespace advlm {

// Append-only JSONL result store; every line carries schema_version.
inline constexpr int kStoreSchemaVersion = 1;

nlohmann::ordered_json row_to_json(const ResultRow& row);
ResultRow row_from_json(const nlohmann::json& j);  // throws InvalidArgument

// Appends one line per row.
void persist_rows(std::span<const ResultRow> rows, const std::filesystem::path& path);

struct StoreIssue {
  std::size_t line = 0;
  std::size_t offset = 0;  // byte offset of the line start
  std::string message;
};

struct LoadedRows {
  std::vector<ResultRow> rows;
  std::vector<StoreIssue> issues;
};

// A missing or empty store loads as no rows. Corrupt lines and schema
// version mismatches throw FormatError unless `tolerant`, in which case they
// are skipped and listed in `issues`.
LoadedRows load_rows(const std::filesystem::path& path, bool tolerant = false);

}  // namespace advlm

#endif  // ADVLM_STORE_HPP_
