#include "advlm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>

#include "advlm/error.hpp"

namespace advlm {

std::string epsilon_label(double epsilon) {
  const double levels = epsilon * 255.0;
  const double rounded = std::round(levels);
  char buf[64];
  if (epsilon > 0.0 && std::abs(levels - rounded) < 1e-9) {
    std::snprintf(buf, sizeof buf, "%.0f/255", rounded);
  } else {
    std::snprintf(buf, sizeof buf, "%.6g", epsilon);
  }
  return buf;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string cell(const ResultRow* row, int decimals) {
  if (row == nullptr) return "-";
  if (row->status != kStatusOk) return "FAILED";
  return fixed(row->value, decimals);
}

int attack_rank(const std::string& attack) {
  if (attack == kCleanAttack) return 0;
  if (attack == "FGSM") return 1;
  if (attack == "PGD") return 2;
  if (attack == "APGD") return 3;
  return 4;
}

// Distinct values in first-appearance order.
template <typename F>
std::vector<std::string> distinct(std::span<const ResultRow> rows, F key) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    const std::string k = key(r);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

std::vector<std::string> attack_order(std::span<const ResultRow> rows) {
  std::vector<std::string> out = distinct(rows, [](const ResultRow& r) { return r.attack; });
  std::stable_sort(out.begin(), out.end(),
                   [](const std::string& a, const std::string& b) { return attack_rank(a) < attack_rank(b); });
  return out;
}

std::vector<double> epsilon_order(std::span<const ResultRow> rows) {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.attack != kCleanAttack && std::find(out.begin(), out.end(), r.epsilon) == out.end()) {
      out.push_back(r.epsilon);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void table_header(std::string& out, const std::string& first, const std::vector<std::string>& columns) {
  out += "| " + first;
  for (const auto& c : columns) out += " | " + c;
  out += " |\n|:---";
  for (std::size_t i = 0; i < columns.size(); ++i) out += "|---:";
  out += "|\n";
}

std::string render_strategies(std::span<const ResultRow> rows, const ReportOptions& options) {
  std::string out;
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) {
    std::pair<std::string, std::string> g{r.model, r.task};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& [model, task] : groups) {
    std::vector<ResultRow> sub;
    for (const auto& r : rows) {
      if (r.model == model && r.task == task) sub.push_back(r);
    }
    const auto strategies = distinct(sub, [](const ResultRow& r) { return r.strategy; });
    std::vector<std::string> attacks;
    bool has_clean = false;
    for (const auto& a : attack_order(sub)) {
      if (a == kCleanAttack) {
        has_clean = true;
      } else {
        attacks.push_back(a);
      }
    }
    std::vector<std::optional<double>> eps_groups;
    for (double e : epsilon_order(sub)) eps_groups.push_back(e);
    if (eps_groups.empty()) eps_groups.push_back(std::nullopt);

    for (const auto& eps : eps_groups) {
      if (!out.empty()) out += "\n";
      out += "## " + model + " / " + task + " (" + sub.front().metric + ") / " +
             (eps ? "eps " + epsilon_label(*eps) : std::string("clean")) + "\n\n";
      std::vector<std::string> columns = attacks;
      if (eps == std::nullopt) columns.clear();
      if (has_clean) columns.push_back("Clean");
      table_header(out, "Strategy", columns);
      for (const auto& s : strategies) {
        out += "| " + s;
        for (const auto& col : columns) {
          const ResultRow* hit = nullptr;
          for (const auto& r : sub) {
            if (r.strategy != s) continue;
            if (col == "Clean" ? r.attack == kCleanAttack : (r.attack == col && r.epsilon == *eps)) hit = &r;
          }
          out += " | " + cell(hit, options.decimals);
        }
        out += " |\n";
      }
    }
  }
  return out;
}

std::string render_attacks(std::span<const ResultRow> rows, const ReportOptions& options) {
  std::string out;
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) {
    std::pair<std::string, std::string> g{r.model, r.strategy};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& [model, strategy] : groups) {
    std::vector<ResultRow> sub;
    for (const auto& r : rows) {
      if (r.model == model && r.strategy == strategy) sub.push_back(r);
    }
    const auto tasks = distinct(sub, [](const ResultRow& r) { return r.task; });
    const auto attacks = attack_order(sub);
    std::vector<std::optional<double>> eps_groups;
    for (double e : epsilon_order(sub)) eps_groups.push_back(e);
    if (eps_groups.empty()) eps_groups.push_back(std::nullopt);

    for (const auto& eps : eps_groups) {
      if (!out.empty()) out += "\n";
      out += "## " + model + " / " + strategy + " / " +
             (eps ? "eps " + epsilon_label(*eps) : std::string("clean")) + "\n\n";
      std::vector<std::string> columns = tasks;
      if (options.average_tasks) columns.push_back("Mean");
      table_header(out, "Attack", columns);
      for (const auto& a : attacks) {
        if (a != kCleanAttack && !eps) continue;
        out += "| " + a;
        double sum = 0.0;
        std::size_t n = 0;
        bool complete = true;
        for (const auto& t : tasks) {
          const ResultRow* hit = nullptr;
          for (const auto& r : sub) {
            if (r.task == t && r.attack == a && (a == kCleanAttack || r.epsilon == *eps)) hit = &r;
          }
          out += " | " + cell(hit, options.decimals);
          if (hit != nullptr && hit->status == kStatusOk) {
            sum += hit->value;
            ++n;
          } else {
            complete = false;
          }
        }
        if (options.average_tasks) {
          out += " | " + (complete && n > 0 ? fixed(sum / static_cast<double>(n), options.decimals) : std::string("-"));
        }
        out += " |\n";
      }
    }
  }
  if (options.average_tasks) {
    out += "\nMean averages raw x100 task values; CIDEr and VQA accuracy are on different scales.\n";
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Splits CSV text into records of fields; quoted fields may contain newlines.
std::vector<std::pair<std::size_t, std::vector<std::string>>> split_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        fields.push_back(std::move(field));
        records.emplace_back(record_line, std::move(fields));
      }
      fields.clear();
      field.clear();
      any = false;
      ++line;
      record_line = line;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("csv", record_line, "unterminated quoted field");
  if (any || !field.empty()) {
    fields.push_back(std::move(field));
    records.emplace_back(record_line, std::move(fields));
  }
  return records;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("csv", line, "bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("csv", line, "bad integer '" + s + "'");
  }
  return std::strtoull(s.c_str(), nullptr, 10);
}

}  // namespace

std::string render_markdown(std::span<const ResultRow> rows, const ReportOptions& options) {
  if (rows.empty()) throw InvalidArgument("no result rows to report");
  return options.layout == TableLayout::kAttacks ? render_attacks(rows, options)
                                                 : render_strategies(rows, options);
}

std::string render_csv(std::span<const ResultRow> rows) {
  if (rows.empty()) throw InvalidArgument("no result rows to report");
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += csv_field(r.model) + ',' + csv_field(r.task) + ',' + csv_field(r.attack) + ',' + g17(r.epsilon) +
           ',' + csv_field(r.strategy) + ',' + csv_field(r.metric) + ',' + g17(r.value) + ',' +
           std::to_string(r.samples) + ',' + std::to_string(r.failed) + ',' + std::to_string(r.seed) + ',' +
           csv_field(r.config_hash) + ',' + csv_field(r.timestamp) + ',' + csv_field(r.version) + ',' +
           csv_field(r.status) + '\n';
  }
  return out;
}

std::vector<ResultRow> parse_csv(std::string_view text) {
  const auto records = split_csv(text);
  if (records.empty()) throw FormatError("csv", 1, "missing header");
  std::string header;
  for (std::size_t i = 0; i < records[0].second.size(); ++i) {
    if (i > 0) header += ',';
    header += records[0].second[i];
  }
  if (header != kCsvHeader) throw FormatError("csv", records[0].first, "unexpected header");

  std::vector<ResultRow> rows;
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& [line, f] = records[k];
    if (f.size() != 14) {
      throw FormatError("csv", line, "expected 14 fields, got " + std::to_string(f.size()));
    }
    ResultRow r;
    r.model = f[0];
    r.task = f[1];
    r.attack = f[2];
    r.epsilon = parse_double(f[3], line);
    r.strategy = f[4];
    r.metric = f[5];
    r.value = parse_double(f[6], line);
    r.samples = parse_u64(f[7], line);
    r.failed = parse_u64(f[8], line);
    r.seed = parse_u64(f[9], line);
    r.config_hash = f[10];
    r.timestamp = f[11];
    r.version = f[12];
    r.status = f[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::filesystem::path emit_report(std::span<const ResultRow> rows, ReportFormat format,
                                  const std::filesystem::path& out_dir, const ReportOptions& options) {
  const std::string text = format == ReportFormat::kCsv ? render_csv(rows) : render_markdown(rows, options);
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / (format == ReportFormat::kCsv ? "report.csv" : "report.md");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
  return path;
}

}  // namespace advlm
