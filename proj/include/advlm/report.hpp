#ifndef ADVLM_REPORT_HPP_
#define ADVLM_REPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advlm {

/// One table cell: (model, task, attack, epsilon, strategy) -> metric value.
struct ResultRow {
  std::string model;
  std::string task;      // dataset name, e.g. "COCO"
  std::string attack;    // "None" for clean rows
  double epsilon = 0.0;  // 0 for clean rows
  std::string strategy;
  std::string metric;    // "cider" | "vqa_accuracy"
  double value = 0.0;    // mean metric x100
  std::size_t samples = 0;
  std::size_t failed = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;
  std::string version;
  std::string status = "ok";  // "ok" | "aborted"

  bool operator==(const ResultRow&) const = default;
};

inline constexpr std::string_view kCleanAttack = "None";
inline constexpr std::string_view kStatusOk = "ok";
inline constexpr std::string_view kStatusAborted = "aborted";

// "8/255" when epsilon is a whole number of grey levels, else shortest decimal.
std::string epsilon_label(double epsilon);

enum class ReportFormat { kMarkdown, kCsv };
enum class TableLayout {
  kStrategies,  // per (model, task, epsilon): strategies x {attacks..., Clean}
  kAttacks,     // per (model, strategy, epsilon): {None, attacks...} x tasks
};

struct ReportOptions {
  TableLayout layout = TableLayout::kStrategies;
  // Attacks layout only: adds a Mean column over tasks on the raw x100
  // scales, which mixes CIDEr and VQA accuracy when both are present.
  bool average_tasks = false;
  int decimals = 2;
};

std::string render_markdown(std::span<const ResultRow> rows, const ReportOptions& options = {});

inline constexpr std::string_view kCsvHeader =
    "model,task,attack,epsilon,strategy,metric,value,samples,failed,seed,config_hash,timestamp,version,status";

std::string render_csv(std::span<const ResultRow> rows);
std::vector<ResultRow> parse_csv(std::string_view text);

// Writes report.md or report.csv under `out_dir`; throws InvalidArgument on
// empty input. Returns the written path.
std::filesystem::path emit_report(std::span<const ResultRow> rows, ReportFormat format,
                                  const std::filesystem::path& out_dir, const ReportOptions& options = {});

}  // namespace advlm

#endif  // ADVLM_REPORT_HPP_
