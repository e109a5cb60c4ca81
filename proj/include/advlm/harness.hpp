#ifndef ADVLM_HARNESS_HPP_
#define ADVLM_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "advlm/attacks.hpp"
#include "advlm/dataset.hpp"
#include "advlm/error.hpp"
#include "advlm/model.hpp"
#include "advlm/report.hpp"

namespace advlm {

// A model endpoint could not be opened or failed its handshake.
class EndpointError : public Error {
 public:
  using Error::Error;
};

/// One [[models]] entry. kind: toy-linear | toy-mlp | toy-two-branch |
/// toy-caption | toy-file | remote.
struct ModelSpec {
  std::string kind;
  std::string name;  // row label; defaults to the model's id()
  std::uint64_t seed = 0;
  Shape shape{3, 8, 8};
  std::size_t classes = 10;
  std::size_t hidden = 16;
  std::size_t length = 4;
  std::size_t vocab = 40;
  std::filesystem::path path;  // toy-file
  std::string endpoint;        // remote: "cmd:..." or "tcp:host:port"
  double timeout_seconds = 120.0;

  bool supports(TaskType task) const;
};

struct DatasetSpec {
  std::filesystem::path path;
  std::string name;  // defaults to the file stem
};

/// One [[attacks]] entry, expanded over its epsilons.
struct AttackSpec {
  AttackMethod method = AttackMethod::kPgd;
  std::vector<double> epsilons;
  int iterations = 100;
  std::optional<double> step_size;
  std::optional<std::set<std::size_t>> mask;  // default: every slot
  bool random_start = false;
};

struct RunConfig {
  std::vector<ModelSpec> models;
  std::vector<DatasetSpec> datasets;
  std::vector<AttackSpec> attacks;
  std::vector<std::string> strategies{"Original"};
  // Per-task overrides of `strategies`.
  std::optional<std::vector<std::string>> caption_strategies;
  std::optional<std::vector<std::string>> vqa_strategies;
  std::size_t sample_size = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path out = "results";
  std::size_t workers = 1;
  // Largest tolerated fraction of failed samples per cell.
  double failure_threshold = 0.0;
  // Pins every row's timestamp; wall clock when unset.
  std::optional<std::string> timestamp;
  // VQA question rewriter: "identity", "fixture:<path>", or an oracle endpoint.
  std::string rewriter = "identity";
  std::optional<std::filesystem::path> rewrite_cache;
  bool fallback_to_original = true;
  bool generate_random_prompts = false;

  const std::vector<std::string>& strategies_for(TaskType task) const;
  // Throws ConfigError.
  void validate() const;
  // Canonical JSON of everything that affects row values (not out, workers).
  std::string canonical_json() const;
  std::string config_hash() const;
};

// "8/255", "0.0313", or a plain number; throws ConfigError.
double parse_epsilon(std::string_view text);

// Relative dataset/model paths resolve against the config file's directory.
RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

struct CliOverrides {
  std::vector<std::string> attacks;
  std::vector<std::string> epsilons;
  std::optional<int> iterations;
  std::vector<std::string> strategies;
  std::vector<std::string> datasets;
  std::optional<std::size_t> sample_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> workers;
};

// --attack replaces the attack list (keeping iterations/mask of the first
// configured attack); --eps and --iters apply to every attack.
void apply_overrides(RunConfig& config, const CliOverrides& overrides);

std::unique_ptr<DifferentiableModel> make_model(const ModelSpec& spec);

struct GridOutcome {
  std::vector<ResultRow> rows;
  std::vector<std::string> warnings;
  std::size_t aborted_cells = 0;
};

using LogFn = std::function<void(const std::string&)>;

/// Evaluates every (model, dataset, strategy, attack, epsilon) cell plus one
/// clean row per (model, dataset, strategy). Samples run on `workers`
/// threads, each with its own model instance; scores are reduced in sample
/// order. Throws ConfigError or EndpointError before any cell runs.
GridOutcome run_grid(const RunConfig& config, const LogFn& log = {});

/// run_grid, then appends rows to out/results.jsonl and writes
/// out/report.md and out/report.csv. Returns the CLI exit code.
int run_and_report(const RunConfig& config, const LogFn& log = {});

// Exit codes of the `advlm` command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitEndpoint = 2;
inline constexpr int kExitPartialFailure = 3;

/// Synthetic dataset for desk runs: `count` random images of the model's
/// input shapes written as PPM, labelled by the model's own clean output.
/// VQA answers are eight copies of the label and two distractors; caption
/// references are the clean caption and two perturbed variants.
struct DeskDatasetOptions {
  std::filesystem::path dir;
  ModelSpec model;
  std::size_t count = 100;
  std::uint64_t seed = 0;
};

std::filesystem::path write_desk_dataset(const DeskDatasetOptions& options);

}  // namespace advlm

#endif  // ADVLM_HARNESS_HPP_
