#include "advlm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iterator>
#include <mutex>
#include <thread>

#include <json.hpp>
#include <toml.hpp>

#include "advlm/metrics.hpp"
#include "advlm/prompts.hpp"
#include "advlm/remote_model.hpp"
#include "advlm/rng.hpp"
#include "advlm/store.hpp"
#include "advlm/toy_models.hpp"
#include "advlm/transport.hpp"

namespace advlm {

using nlohmann::ordered_json;

bool ModelSpec::supports(TaskType task) const {
  if (kind == "remote") return true;
  if (kind == "toy-caption") return task == TaskType::kCaptioning;
  if (kind == "toy-file") return true;  // refined once the file is loaded
  return task == TaskType::kVqa;
}

const std::vector<std::string>& RunConfig::strategies_for(TaskType task) const {
  if (task == TaskType::kCaptioning && caption_strategies) return *caption_strategies;
  if (task == TaskType::kVqa && vqa_strategies) return *vqa_strategies;
  return strategies;
}

namespace {

const std::set<std::string> kModelKinds = {"toy-linear", "toy-mlp", "toy-two-branch", "toy-caption",
                                           "toy-file", "remote"};

bool strategy_valid(TaskType task, const std::string& name) {
  return task == TaskType::kCaptioning ? parse_caption_strategy(name).has_value()
                                       : parse_vqa_strategy(name).has_value();
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "unreadable:" + path.string();
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  if (models.empty()) throw ConfigError("config lists no models");
  if (datasets.empty()) throw ConfigError("config lists no datasets");
  if (sample_size < 1) throw ConfigError("sample_size must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (!(failure_threshold >= 0.0 && failure_threshold <= 1.0)) {
    throw ConfigError("failure_threshold must lie in [0, 1]");
  }
  for (const auto& m : models) {
    if (!kModelKinds.contains(m.kind)) throw ConfigError("unknown model kind '" + m.kind + "'");
    if (m.kind == "remote" && m.endpoint.empty()) throw ConfigError("remote model needs an endpoint");
    if (m.kind == "toy-file" && m.path.empty()) throw ConfigError("toy-file model needs a path");
    if (!(m.timeout_seconds > 0.0)) throw ConfigError("model timeout must be positive");
  }
  for (const auto& a : attacks) {
    if (a.epsilons.empty()) throw ConfigError(std::string(method_name(a.method)) + " attack lists no epsilons");
    for (double e : a.epsilons) {
      if (!(e > 0.0 && e <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
    }
    if (a.method == AttackMethod::kPgd && a.iterations < 1) throw ConfigError("PGD needs at least 1 iteration");
    if (a.method == AttackMethod::kApgd && a.iterations < 2) throw ConfigError("APGD needs at least 2 iterations");
    if (a.step_size && !(*a.step_size > 0.0)) throw ConfigError("step_size must be positive");
    if (a.mask && a.mask->empty()) throw ConfigError("attack mask must name at least one slot");
  }
  for (auto task : {TaskType::kCaptioning, TaskType::kVqa}) {
    const auto& list = strategies_for(task);
    if (list.empty()) throw ConfigError("no strategies for " + std::string(task_name(task)));
    std::set<std::string> seen;
    for (const auto& s : list) {
      if (!seen.insert(s).second) throw ConfigError("strategy '" + s + "' listed twice");
    }
  }
}

std::string RunConfig::canonical_json() const {
  ordered_json j;
  j["models"] = ordered_json::array();
  for (const auto& m : models) {
    ordered_json jm;
    jm["kind"] = m.kind;
    jm["name"] = m.name;
    jm["seed"] = m.seed;
    jm["shape"] = {m.shape.channels, m.shape.height, m.shape.width};
    jm["classes"] = m.classes;
    jm["hidden"] = m.hidden;
    jm["length"] = m.length;
    jm["vocab"] = m.vocab;
    jm["model_file"] = m.path.empty() ? std::string() : file_digest(m.path);
    jm["endpoint"] = m.endpoint;
    j["models"].push_back(jm);
  }
  j["datasets"] = ordered_json::array();
  for (const auto& d : datasets) j["datasets"].push_back({{"name", d.name}, {"sha256", file_digest(d.path)}});
  j["attacks"] = ordered_json::array();
  for (const auto& a : attacks) {
    ordered_json ja;
    ja["method"] = method_name(a.method);
    ja["epsilons"] = a.epsilons;
    ja["iterations"] = a.iterations;
    ja["step_size"] = a.step_size ? ordered_json(*a.step_size) : ordered_json();
    ja["mask"] = a.mask ? ordered_json(std::vector<std::size_t>(a.mask->begin(), a.mask->end())) : ordered_json();
    ja["random_start"] = a.random_start;
    j["attacks"].push_back(ja);
  }
  j["caption_strategies"] = strategies_for(TaskType::kCaptioning);
  j["vqa_strategies"] = strategies_for(TaskType::kVqa);
  j["sample_size"] = sample_size;
  j["seed"] = seed;
  j["failure_threshold"] = failure_threshold;
  j["rewriter"] = rewriter;
  j["fallback_to_original"] = fallback_to_original;
  j["random_prompts"] = generate_random_prompts;
  return j.dump();
}

std::string RunConfig::config_hash() const { return sha256_hex(canonical_json()); }

double parse_epsilon(std::string_view text) {
  std::string s(text);
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  auto number = [&text](const std::string& part) {
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (part.empty() || end != part.c_str() + part.size() || !std::isfinite(v)) {
      throw ConfigError("cannot parse epsilon '" + std::string(text) + "'");
    }
    return v;
  };
  double value = 0.0;
  if (auto slash = s.find('/'); slash != std::string::npos) {
    const double den = number(s.substr(slash + 1));
    if (den == 0.0) throw ConfigError("epsilon '" + std::string(text) + "' divides by zero");
    value = number(s.substr(0, slash)) / den;
  } else {
    value = number(s);
  }
  if (!(value > 0.0 && value <= 1.0)) throw ConfigError("epsilon '" + std::string(text) + "' must lie in (0, 1]");
  return value;
}

// ---------------------------------------------------------------------------
// TOML

namespace {

void check_keys(const toml::table& t, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, node] : t) {
    if (!allowed.contains(std::string(key.str()))) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + where);
    }
  }
}

std::string get_string(const toml::table& t, const char* key, const std::string& where, std::string fallback = {}) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return fallback;
  if (!n->is_string()) throw ConfigError(where + "." + key + " must be a string");
  return *n->value<std::string>();
}

std::int64_t get_int(const toml::table& t, const char* key, const std::string& where, std::int64_t fallback) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return fallback;
  if (!n->is_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return *n->value<std::int64_t>();
}

std::size_t get_count(const toml::table& t, const char* key, const std::string& where, std::size_t fallback) {
  const std::int64_t v = get_int(t, key, where, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(where + "." + key + " must not be negative");
  return static_cast<std::size_t>(v);
}

double get_number(const toml::table& t, const char* key, const std::string& where, double fallback) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return fallback;
  if (n->is_integer()) return static_cast<double>(*n->value<std::int64_t>());
  if (n->is_floating_point()) return *n->value<double>();
  throw ConfigError(where + "." + key + " must be a number");
}

bool get_bool(const toml::table& t, const char* key, const std::string& where, bool fallback) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return fallback;
  if (!n->is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
  return *n->value<bool>();
}

double epsilon_node(const toml::node& n, const std::string& where) {
  if (n.is_string()) return parse_epsilon(*n.value<std::string>());
  if (n.is_integer() || n.is_floating_point()) {
    const double v = n.is_integer() ? static_cast<double>(*n.value<std::int64_t>()) : *n.value<double>();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return parse_epsilon(buf);
  }
  throw ConfigError(where + " must be a number or a fraction string like \"8/255\"");
}

std::vector<std::string> string_array(const toml::table& t, const char* key, const std::string& where) {
  const toml::node* n = t.get(key);
  const toml::array* arr = n ? n->as_array() : nullptr;
  if (arr == nullptr) throw ConfigError(where + "." + key + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : *arr) {
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be an array of strings");
    out.push_back(*v.value<std::string>());
  }
  return out;
}

const toml::array* table_array(const toml::table& root, const char* key) {
  const toml::node* n = root.get(key);
  if (n == nullptr) return nullptr;
  const toml::array* arr = n->as_array();
  if (arr == nullptr || !arr->is_array_of_tables()) throw ConfigError(std::string(key) + " must be [[" + key + "]] tables");
  return arr;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("TOML parse error at line " + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }
  check_keys(root,
             {"models", "datasets", "attacks", "strategies", "caption_strategies", "vqa_strategies", "sample_size",
              "seed", "out", "workers", "failure_threshold", "timestamp", "rewriter", "rewrite_cache",
              "fallback_to_original", "random_prompts"},
             "config");

  RunConfig c;
  if (const auto* models = table_array(root, "models")) {
    for (std::size_t i = 0; i < models->size(); ++i) {
      const toml::table& t = *models->get(i)->as_table();
      const std::string where = "models[" + std::to_string(i) + "]";
      check_keys(t, {"kind", "name", "seed", "shape", "classes", "hidden", "length", "vocab", "path", "endpoint",
                     "timeout"},
                 where);
      ModelSpec m;
      m.kind = get_string(t, "kind", where);
      if (m.kind.empty()) throw ConfigError(where + " needs a kind");
      m.name = get_string(t, "name", where);
      m.seed = static_cast<std::uint64_t>(get_count(t, "seed", where, 0));
      if (const toml::node* shape = t.get("shape")) {
        const toml::array* arr = shape->as_array();
        if (arr == nullptr || arr->size() != 3) throw ConfigError(where + ".shape must be [C, H, W]");
        std::size_t dims[3];
        for (std::size_t k = 0; k < 3; ++k) {
          const auto v = arr->get(k)->value<std::int64_t>();
          if (!v || *v < 1) throw ConfigError(where + ".shape entries must be positive integers");
          dims[k] = static_cast<std::size_t>(*v);
        }
        m.shape = Shape{dims[0], dims[1], dims[2]};
      }
      m.classes = get_count(t, "classes", where, m.classes);
      m.hidden = get_count(t, "hidden", where, m.hidden);
      m.length = get_count(t, "length", where, m.length);
      m.vocab = get_count(t, "vocab", where, m.vocab);
      if (const std::string p = get_string(t, "path", where); !p.empty()) m.path = resolve(base_dir, p);
      m.endpoint = get_string(t, "endpoint", where);
      m.timeout_seconds = get_number(t, "timeout", where, m.timeout_seconds);
      c.models.push_back(std::move(m));
    }
  }
  if (const auto* datasets = table_array(root, "datasets")) {
    for (std::size_t i = 0; i < datasets->size(); ++i) {
      const toml::table& t = *datasets->get(i)->as_table();
      const std::string where = "datasets[" + std::to_string(i) + "]";
      check_keys(t, {"path", "name"}, where);
      DatasetSpec d;
      const std::string p = get_string(t, "path", where);
      if (p.empty()) throw ConfigError(where + " needs a path");
      d.path = resolve(base_dir, p);
      d.name = get_string(t, "name", where, d.path.stem().string());
      c.datasets.push_back(std::move(d));
    }
  }
  if (const auto* attacks = table_array(root, "attacks")) {
    for (std::size_t i = 0; i < attacks->size(); ++i) {
      const toml::table& t = *attacks->get(i)->as_table();
      const std::string where = "attacks[" + std::to_string(i) + "]";
      check_keys(t, {"method", "epsilons", "iterations", "step_size", "mask", "random_start"}, where);
      AttackSpec a;
      try {
        a.method = parse_method(get_string(t, "method", where));
      } catch (const InvalidArgument& e) {
        throw ConfigError(where + ": " + e.what());
      }
      const toml::node* eps = t.get("epsilons");
      const toml::array* eps_arr = eps ? eps->as_array() : nullptr;
      if (eps_arr == nullptr) throw ConfigError(where + ".epsilons must be an array");
      for (const auto& e : *eps_arr) a.epsilons.push_back(epsilon_node(e, where + ".epsilons"));
      a.iterations = static_cast<int>(get_int(t, "iterations", where, a.method == AttackMethod::kFgsm ? 1 : 100));
      if (const toml::node* step = t.get("step_size")) a.step_size = epsilon_node(*step, where + ".step_size");
      if (const toml::node* mask = t.get("mask")) {
        const toml::array* arr = mask->as_array();
        if (arr == nullptr) throw ConfigError(where + ".mask must be an array of slot indices");
        std::set<std::size_t> slots;
        for (const auto& v : *arr) {
          const auto slot = v.value<std::int64_t>();
          if (!v.is_integer() || *slot < 0) throw ConfigError(where + ".mask must hold slot indices");
          slots.insert(static_cast<std::size_t>(*slot));
        }
        a.mask = std::move(slots);
      }
      a.random_start = get_bool(t, "random_start", where, false);
      c.attacks.push_back(std::move(a));
    }
  }
  if (root.contains("strategies")) c.strategies = string_array(root, "strategies", "config");
  if (root.contains("caption_strategies")) c.caption_strategies = string_array(root, "caption_strategies", "config");
  if (root.contains("vqa_strategies")) c.vqa_strategies = string_array(root, "vqa_strategies", "config");
  const std::int64_t sample_size = get_int(root, "sample_size", "config", 1000);
  if (sample_size < 1) throw ConfigError("sample_size must be at least 1");
  c.sample_size = static_cast<std::size_t>(sample_size);
  c.seed = static_cast<std::uint64_t>(get_count(root, "seed", "config", 0));
  if (const std::string out = get_string(root, "out", "config"); !out.empty()) c.out = resolve(base_dir, out);
  c.workers = get_count(root, "workers", "config", 1);
  c.failure_threshold = get_number(root, "failure_threshold", "config", 0.0);
  if (root.contains("timestamp")) c.timestamp = get_string(root, "timestamp", "config");
  c.rewriter = get_string(root, "rewriter", "config", "identity");
  if (c.rewriter.starts_with("fixture:")) {
    c.rewriter = "fixture:" + resolve(base_dir, c.rewriter.substr(8)).string();
  }
  if (const std::string cache = get_string(root, "rewrite_cache", "config"); !cache.empty()) {
    c.rewrite_cache = resolve(base_dir, cache);
  }
  c.fallback_to_original = get_bool(root, "fallback_to_original", "config", true);
  c.generate_random_prompts = get_bool(root, "random_prompts", "config", false);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, path.parent_path());
}

void apply_overrides(RunConfig& config, const CliOverrides& o) {
  if (!o.attacks.empty()) {
    AttackSpec base = config.attacks.empty() ? AttackSpec{} : config.attacks.front();
    if (base.epsilons.empty()) base.epsilons = {8.0 / 255.0};
    std::vector<AttackSpec> attacks;
    for (const auto& name : o.attacks) {
      AttackSpec a = base;
      try {
        a.method = parse_method(name);
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
      if (a.method == AttackMethod::kFgsm) {
        a.iterations = 1;
      } else if (a.iterations < 2) {
        a.iterations = 100;
      }
      attacks.push_back(a);
    }
    config.attacks = std::move(attacks);
  }
  if (!o.epsilons.empty()) {
    std::vector<double> eps;
    for (const auto& e : o.epsilons) eps.push_back(parse_epsilon(e));
    for (auto& a : config.attacks) a.epsilons = eps;
  }
  if (o.iterations) {
    for (auto& a : config.attacks) {
      if (a.method != AttackMethod::kFgsm) a.iterations = *o.iterations;
    }
  }
  if (!o.strategies.empty()) {
    config.strategies = o.strategies;
    config.caption_strategies.reset();
    config.vqa_strategies.reset();
  }
  if (!o.datasets.empty()) {
    config.datasets.clear();
    for (const auto& d : o.datasets) config.datasets.push_back({d, std::filesystem::path(d).stem().string()});
  }
  if (o.sample_size) config.sample_size = *o.sample_size;
  if (o.seed) config.seed = *o.seed;
  if (o.out) config.out = *o.out;
  if (o.workers) config.workers = *o.workers;
  config.validate();
}

std::unique_ptr<DifferentiableModel> make_model(const ModelSpec& spec) {
  if (spec.kind == "toy-linear") return std::make_unique<ToyLinearModel>(spec.shape, spec.classes, spec.seed);
  if (spec.kind == "toy-mlp") {
    return std::make_unique<ToyMLPModel>(spec.shape, spec.hidden, spec.classes, spec.seed);
  }
  if (spec.kind == "toy-two-branch") {
    return std::make_unique<ToyTwoBranchModel>(spec.shape, spec.shape, spec.classes, spec.seed);
  }
  if (spec.kind == "toy-caption") {
    return std::make_unique<ToyCaptionModel>(spec.shape, spec.length, spec.vocab, spec.seed);
  }
  if (spec.kind == "toy-file") return load_toy_model(spec.path);
  if (spec.kind == "remote") {
    try {
      RemoteOptions options;
      options.timeout_seconds = spec.timeout_seconds;
      return std::make_unique<RemoteModel>(open_transport(spec.endpoint), options);
    } catch (const Error& e) {
      throw EndpointError("endpoint " + spec.endpoint + ": " + e.what());
    }
  }
  throw ConfigError("unknown model kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// Grid

namespace {

bool model_supports(const DifferentiableModel& model, const ModelSpec& spec, TaskType task) {
  if (spec.kind != "toy-file") return spec.supports(task);
  const bool captioner = dynamic_cast<const ToyCaptionModel*>(&model) != nullptr;
  return captioner == (task == TaskType::kCaptioning);
}

struct LoadedDataset {
  DatasetSpec spec;
  TaskType task = TaskType::kVqa;
  Dataset subset;
  std::vector<std::vector<ImageTensor>> inputs;  // per sample
  std::vector<std::string> load_errors;          // empty when the images loaded
  std::optional<CaptionCorpus> corpus;
};

LoadedDataset load_for_grid(const DatasetSpec& spec, const RunConfig& config) {
  LoadedDataset out;
  out.spec = spec;
  Dataset full;
  try {
    full = load_dataset(spec.path);
  } catch (const Error& e) {
    throw ConfigError(std::string("dataset ") + spec.name + ": " + e.what());
  }
  if (full.size() == 0) throw ConfigError("dataset " + spec.name + " is empty");
  out.task = full.records.front().task;
  if (full.count(out.task) != full.size()) {
    throw ConfigError("dataset " + spec.name + " mixes captioning and vqa records");
  }
  for (const auto& s : config.strategies_for(out.task)) {
    if (!strategy_valid(out.task, s)) {
      throw ConfigError("strategy '" + s + "' is not valid for " + std::string(task_name(out.task)) +
                        " dataset " + spec.name);
    }
  }
  out.subset = sample_subset(full, config.sample_size, config.seed);
  const std::size_t n = out.subset.size();
  out.inputs.resize(n);
  out.load_errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = out.subset.records[i];
    try {
      for (std::size_t k = 0; k < rec.images.size(); ++k) {
        out.inputs[i].push_back(load_record_image(out.subset, rec, k));
      }
    } catch (const Error& e) {
      out.load_errors[i] = e.what();
    }
  }
  if (out.task == TaskType::kCaptioning) {
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : out.subset.records) refs.push_back(r.references);
    out.corpus = compute_document_frequencies(refs);
  }
  return out;
}

void for_each_sample(std::size_t n, std::size_t workers,
                     const std::function<void(std::size_t worker, std::size_t index)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = next++; i < n; i = next++) fn(w, i);
    });
  }
  for (auto& t : threads) t.join();
}

void check_inputs(const DifferentiableModel& model, const std::vector<ImageTensor>& inputs) {
  const auto shapes = model.input_shapes();
  if (inputs.size() != shapes.size()) {
    throw InvalidArgument("sample has " + std::to_string(inputs.size()) + " images, model expects " +
                          std::to_string(shapes.size()));
  }
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    if (inputs[s].shape() != shapes[s]) {
      throw InvalidArgument("image " + std::to_string(s) + " has shape " + inputs[s].shape().str() +
                            ", model expects " + shapes[s].str());
    }
  }
}

struct CellScores {
  std::vector<double> scores;
  std::size_t failed = 0;
  std::vector<std::string> errors;  // in sample order
};

}  // namespace

GridOutcome run_grid(const RunConfig& config, const LogFn& log) {
  config.validate();
  auto say = [&log](const std::string& msg) {
    if (log) log(msg);
  };

  std::vector<LoadedDataset> datasets;
  for (const auto& d : config.datasets) datasets.push_back(load_for_grid(d, config));

  const std::string config_hash = config.config_hash();
  const std::string timestamp = config.timestamp.value_or(now_utc());

  // One model instance per worker.
  std::vector<std::vector<std::unique_ptr<DifferentiableModel>>> instances;
  for (const auto& spec : config.models) {
    std::vector<std::unique_ptr<DifferentiableModel>> pool;
    for (std::size_t w = 0; w < config.workers; ++w) {
      try {
        pool.push_back(make_model(spec));
      } catch (const EndpointError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError("model " + (spec.name.empty() ? spec.kind : spec.name) + ": " + e.what());
      }
    }
    const auto& first = *pool.front();
    bool any = false;
    for (const auto& d : datasets) any = any || model_supports(first, spec, d.task);
    if (!any) {
      throw ConfigError("model " + first.id() + " supports none of the configured dataset tasks");
    }
    for (const auto& a : config.attacks) {
      AttackConfig probe;
      probe.method = a.method;
      probe.epsilon = a.epsilons.front();
      probe.iterations = a.iterations;
      probe.step_size = a.step_size;
      probe.input_mask = a.mask.value_or(AttackConfig::all_slots(first.slot_count()));
      try {
        probe.validate(first.slot_count());
      } catch (const InvalidArgument& e) {
        throw ConfigError("model " + first.id() + ": " + e.what());
      }
    }
    instances.push_back(std::move(pool));
  }

  std::unique_ptr<RewriterClient> rewriter;
  std::unique_ptr<RewriteCache> cache;
  auto ensure_rewriter = [&]() -> RewriterClient& {
    if (rewriter) return *rewriter;
    if (config.rewrite_cache) cache = std::make_unique<RewriteCache>(*config.rewrite_cache);
    if (config.rewriter == "identity") {
      rewriter = std::make_unique<IdentityRewriter>();
    } else if (config.rewriter.starts_with("fixture:")) {
      try {
        rewriter = std::make_unique<FixtureRewriter>(std::filesystem::path(config.rewriter.substr(8)));
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    } else {
      try {
        rewriter = std::make_unique<RemoteRewriter>(open_transport(config.rewriter));
      } catch (const Error& e) {
        throw EndpointError("rewriter " + config.rewriter + ": " + e.what());
      }
    }
    return *rewriter;
  };

  GridOutcome outcome;
  for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
    const ModelSpec& spec = config.models[mi];
    auto& pool = instances[mi];
    const std::string model_name = spec.name.empty() ? pool.front()->id() : spec.name;

    for (const auto& ds : datasets) {
      if (!model_supports(*pool.front(), spec, ds.task)) continue;
      const std::size_t n = ds.subset.size();
      const MetricKind metric = ds.task == TaskType::kVqa ? MetricKind::kVqaAccuracy : MetricKind::kCider;

      for (const std::string& strategy : config.strategies_for(ds.task)) {
        std::vector<std::string> prompts(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& rec = ds.subset.records[i];
          if (ds.task == TaskType::kCaptioning) {
            CaptionPromptOptions po;
            po.generate_random = config.generate_random_prompts;
            po.seed = mix_seed(config.seed, i);
            prompts[i] = apply_caption_strategy(*parse_caption_strategy(strategy), po);
            continue;
          }
          const VqaStrategy vs = *parse_vqa_strategy(strategy);
          if (vs == VqaStrategy::kOriginal) {
            prompts[i] = rec.question;
            continue;
          }
          RewriteOptions ro;
          ro.fallback_to_original = config.fallback_to_original;
          try {
            const RewriteOutcome r = rewrite_question(ensure_rewriter(), vs, rec.question, ro, cache.get());
            if (r.fell_back) outcome.warnings.push_back("sample " + rec.id + ": " + r.warning);
            prompts[i] = r.text;
          } catch (const ConfigError&) {
            throw;
          } catch (const EndpointError&) {
            throw;
          } catch (const Error& e) {
            throw EndpointError("rewrite of sample " + rec.id + " failed: " + e.what());
          }
        }

        auto run_cell = [&](const std::optional<AttackConfig>& attack_cfg) {
          std::vector<std::optional<double>> per_sample(n);
          std::vector<std::string> errors(n);
          for_each_sample(n, config.workers, [&](std::size_t w, std::size_t i) {
            const auto& rec = ds.subset.records[i];
            if (!ds.load_errors[i].empty()) {
              errors[i] = "sample " + rec.id + ": " + ds.load_errors[i];
              return;
            }
            try {
              const DifferentiableModel& model = *pool[w];
              check_inputs(model, ds.inputs[i]);
              const auto& texts = ds.task == TaskType::kVqa ? rec.answers : rec.references;
              std::vector<ImageTensor> x;
              if (attack_cfg) {
                Sample sample{rec.id, ds.inputs[i], prompts[i], ReferenceSet{texts}};
                AttackConfig cfg = *attack_cfg;
                cfg.seed = mix_seed(config.seed, i);
                x = attack(model, sample, cfg).adversarial_inputs;
              } else {
                x = ds.inputs[i];
              }
              const std::string output = model.generate(x, prompts[i]);
              per_sample[i] = ds.task == TaskType::kVqa ? vqa_accuracy(output, rec.answers)
                                                        : cider_score(output, rec.references, *ds.corpus);
            } catch (const std::exception& e) {
              errors[i] = "sample " + rec.id + ": " + e.what();
            }
          });
          CellScores cell;
          for (std::size_t i = 0; i < n; ++i) {
            if (per_sample[i]) {
              cell.scores.push_back(*per_sample[i]);
            } else {
              ++cell.failed;
              cell.errors.push_back(errors[i]);
            }
          }
          return cell;
        };

        auto emit = [&](const std::string& attack_name, double eps, const CellScores& cell) {
          ResultRow row;
          row.model = model_name;
          row.task = ds.spec.name;
          row.attack = attack_name;
          row.epsilon = eps;
          row.strategy = strategy;
          row.metric = std::string(metric_name(metric));
          row.samples = n;
          row.failed = cell.failed;
          row.seed = config.seed;
          row.config_hash = config_hash;
          row.timestamp = timestamp;
          row.version = ADVLM_VERSION;
          const bool over = static_cast<double>(cell.failed) > config.failure_threshold * static_cast<double>(n);
          const std::string where = model_name + " / " + ds.spec.name + " / " + strategy + " / " + attack_name +
                                    (eps > 0 ? " " + epsilon_label(eps) : std::string());
          for (const auto& e : cell.errors) outcome.warnings.push_back(where + ": " + e);
          if (over || cell.scores.empty()) {
            row.status = std::string(kStatusAborted);
            row.value = 0.0;
            ++outcome.aborted_cells;
            say(where + ": ABORTED, " + std::to_string(cell.failed) + "/" + std::to_string(n) + " samples failed");
          } else {
            row.value = aggregate(cell.scores) * kReportScale;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.2f", row.value);
            say(where + ": " + buf + " (" + std::to_string(n) + " samples, " + std::to_string(cell.failed) +
                " failed)");
          }
          outcome.rows.push_back(std::move(row));
        };

        emit(std::string(kCleanAttack), 0.0, run_cell(std::nullopt));
        for (const auto& a : config.attacks) {
          for (double eps : a.epsilons) {
            AttackConfig cfg;
            cfg.method = a.method;
            cfg.epsilon = eps;
            cfg.iterations = a.iterations;
            cfg.step_size = a.step_size;
            cfg.input_mask = a.mask.value_or(AttackConfig::all_slots(pool.front()->slot_count()));
            cfg.random_start = a.random_start;
            emit(std::string(method_name(a.method)), eps, run_cell(cfg.normalized()));
          }
        }
      }
    }
  }
  return outcome;
}

int run_and_report(const RunConfig& config, const LogFn& log) {
  const GridOutcome outcome = run_grid(config, log);
  for (const auto& w : outcome.warnings) {
    if (log) log("warning: " + w);
  }
  std::filesystem::create_directories(config.out);
  persist_rows(outcome.rows, config.out / "results.jsonl");
  if (!outcome.rows.empty()) {
    ReportOptions by_strategy;
    ReportOptions by_attack;
    by_attack.layout = TableLayout::kAttacks;
    std::ofstream md(config.out / "report.md", std::ios::binary | std::ios::trunc);
    md << "# Results by prompt strategy\n\n"
       << render_markdown(outcome.rows, by_strategy) << "\n# Results by attack\n\n"
       << render_markdown(outcome.rows, by_attack);
    emit_report(outcome.rows, ReportFormat::kCsv, config.out);
  }
  return outcome.aborted_cells > 0 ? kExitPartialFailure : kExitOk;
}

// ---------------------------------------------------------------------------
// Desk dataset

std::filesystem::path write_desk_dataset(const DeskDatasetOptions& options) {
  if (options.count == 0) throw ConfigError("desk dataset needs at least one sample");
  const auto model = make_model(options.model);
  const auto* toy = dynamic_cast<const ToyModel*>(model.get());
  if (toy == nullptr) throw ConfigError("desk datasets are labelled by a toy model");
  const bool captioning = dynamic_cast<const ToyCaptionModel*>(toy) != nullptr;
  const auto shapes = model->input_shapes();
  const auto& vocab = toy->vocabulary();

  std::filesystem::create_directories(options.dir / "images");
  Dataset ds;
  for (std::size_t i = 0; i < options.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    DatasetRecord rec;
    rec.id = std::string("desk-") + stem;
    rec.task = captioning ? TaskType::kCaptioning : TaskType::kVqa;
    std::vector<ImageTensor> inputs;
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      const ImageTensor img = random_tensor(shapes[s], mix_seed(options.seed, i * shapes.size() + s));
      std::string name = std::string("images/") + stem + (shapes.size() > 1 ? "_" + std::to_string(s) : "");
      if (shapes[s].channels == 3) {
        name += ".ppm";
        write_ppm(img, options.dir / name);
      } else {
        name += ".advt";
        save_tensor(img, options.dir / name);
      }
      rec.images.push_back(name);
      inputs.push_back(load_image(options.dir / name));
    }
    const std::string clean = model->generate(inputs, "");
    if (captioning) {
      const auto words = tokenize_caption(clean);
      rec.references.push_back(clean);
      std::string shorter;
      for (std::size_t w = 0; w + 1 < words.size(); ++w) shorter += (w ? " " : "") + words[w];
      rec.references.push_back(shorter.empty() ? clean : shorter);
      const auto at = std::find(vocab.begin(), vocab.end(), words.front()) - vocab.begin();
      std::string swapped = vocab[(static_cast<std::size_t>(at) + 1) % vocab.size()];
      for (std::size_t w = 1; w < words.size(); ++w) swapped += " " + words[w];
      rec.references.push_back(swapped);
    } else {
      const auto at = static_cast<std::size_t>(std::find(vocab.begin(), vocab.end(), clean) - vocab.begin());
      rec.question = "What is shown in the image?";
      rec.answers.assign(8, clean);
      rec.answers.push_back(vocab[(at + 1) % vocab.size()]);
      rec.answers.push_back(vocab[(at + 2) % vocab.size()]);
    }
    ds.records.push_back(std::move(rec));
  }
  const auto path = options.dir / "dataset.jsonl";
  write_dataset(ds, path);
  return path;
}

}  // namespace advlm
