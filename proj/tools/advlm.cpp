#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <unistd.h>

#include <CLI11.hpp>

#include "advlm/dataset.hpp"
#include "advlm/harness.hpp"
#include "advlm/oracle_server.hpp"
#include "advlm/prompts.hpp"
#include "advlm/protocol_check.hpp"
#include "advlm/report.hpp"
#include "advlm/store.hpp"
#include "advlm/toy_models.hpp"
#include "advlm/transport.hpp"

namespace {

using namespace advlm;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

Shape parse_shape(const std::string& text) {
  Shape s;
  char sep1 = 0, sep2 = 0;
  std::istringstream in(text);
  if (!(in >> s.channels >> sep1 >> s.height >> sep2 >> s.width) || sep1 != ',' || sep2 != ',' || s.numel() == 0) {
    throw ConfigError("shape must look like 3,8,8");
  }
  return s;
}

struct ModelFlags {
  std::string kind = "toy-mlp";
  std::uint64_t seed = 0;
  std::string shape = "3,8,8";
  std::size_t classes = 10;
  std::size_t hidden = 16;
  std::size_t length = 4;
  std::size_t vocab = 40;
  std::string path;

  void add(CLI::App* app) {
    app->add_option("--model-kind", kind, "toy-linear | toy-mlp | toy-two-branch | toy-caption | toy-file");
    app->add_option("--model-seed", seed, "weight seed");
    app->add_option("--shape", shape, "input shape C,H,W");
    app->add_option("--classes", classes, "classifier classes");
    app->add_option("--hidden", hidden, "toy-mlp hidden units");
    app->add_option("--length", length, "toy-caption output length");
    app->add_option("--vocab", vocab, "toy-caption vocabulary size");
    app->add_option("--model-file", path, "ADVT model file for toy-file");
  }

  ModelSpec spec() const {
    ModelSpec m;
    m.kind = kind;
    m.seed = seed;
    m.shape = parse_shape(shape);
    m.classes = classes;
    m.hidden = hidden;
    m.length = length;
    m.vocab = vocab;
    m.path = path;
    return m;
  }
};

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Adversarial robustness evaluation toolkit for vision-language models"};
  app.set_version_flag("--version", std::string(ADVLM_VERSION));
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Evaluate a grid from a TOML config");
  std::string config_path;
  CliOverrides ov;
  std::string iters, sample_size, seed, out, workers;
  run->add_option("config", config_path, "TOML run config")->required();
  run->add_option("--attack", ov.attacks, "FGSM, PGD, APGD")->delimiter(',');
  run->add_option("--eps", ov.epsilons, "epsilons such as 8/255")->delimiter(',');
  run->add_option("--iters", iters, "iteration budget of PGD and APGD");
  run->add_option("--strategy", ov.strategies, "prompt strategies")->delimiter(',');
  run->add_option("--dataset", ov.datasets, "dataset JSONL files");
  run->add_option("--sample-size", sample_size, "samples per dataset");
  run->add_option("--seed", seed, "subset and attack seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--workers", workers, "worker threads");

  // report
  auto* report = app.add_subcommand("report", "Render tables from a result store");
  std::string store_path, format = "markdown", layout = "strategies", report_out;
  bool average = false, tolerant = false;
  report->add_option("store", store_path, "results.jsonl")->required();
  report->add_option("--format", format, "markdown | csv")->check(CLI::IsMember({"markdown", "csv"}));
  report->add_option("--layout", layout, "strategies | attacks")->check(CLI::IsMember({"strategies", "attacks"}));
  report->add_flag("--average-tasks", average, "add a Mean column over tasks (attacks layout)");
  report->add_flag("--tolerant", tolerant, "skip corrupt store lines");
  report->add_option("-o,--output", report_out, "write to a file instead of stdout");

  // convert-dataset
  auto* convert = app.add_subcommand("convert-dataset", "Convert COCO or VQAv2 annotations to dataset JSONL");
  std::string conv_format, annotations, questions, pattern, conv_out;
  convert->add_option("--from", conv_format, "coco | vqav2")->required()->check(CLI::IsMember({"coco", "vqav2"}));
  convert->add_option("--annotations", annotations, "annotation JSON")->required();
  convert->add_option("--questions", questions, "VQAv2 question JSON");
  convert->add_option("--images", pattern, "image path pattern, e.g. ppm/{image_id:012}.ppm")->required();
  convert->add_option("-o,--output", conv_out, "output JSONL")->required();

  // rewrite-cache
  auto* rcache = app.add_subcommand("rewrite-cache", "Fill or list the VQA question rewrite cache");
  std::string cache_path, cache_dataset, rewriter_spec = "identity";
  std::vector<std::string> cache_strategies;
  bool list = false;
  rcache->add_option("cache", cache_path, "rewrite cache JSONL")->required();
  rcache->add_option("--dataset", cache_dataset, "VQA dataset whose questions to rewrite");
  rcache->add_option("--strategy", cache_strategies, "Rephrase, Expand, AC, AP")->delimiter(',');
  rcache->add_option("--rewriter", rewriter_spec, "identity | fixture:<path> | cmd:... | tcp:host:port");
  rcache->add_flag("--list", list, "print cached records");

  // protocol-check
  auto* check = app.add_subcommand("protocol-check", "Validate an oracle peer against the protocol");
  std::string endpoint;
  ProtocolCheckOptions check_opts;
  ModelFlags twin_flags;
  bool with_twin = false;
  check->add_option("endpoint", endpoint, "cmd:<command> or tcp:<host>:<port>")->required();
  check->add_option("--fuzz", check_opts.fuzz_lines, "malformed lines to send");
  check->add_option("--seed", check_opts.seed, "fuzz and fixture seed");
  check->add_option("--timeout", check_opts.timeout_seconds, "seconds per exchange");
  check->add_option("--tolerance", check_opts.tolerance, "twin agreement tolerance");
  check->add_flag("--twin", with_twin, "compare against the in-process model given by the model flags");
  twin_flags.add(check);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve an in-process toy model over stdio");
  ModelFlags serve_flags;
  bool serve_rewrite = false;
  serve_flags.add(serve);
  serve->add_flag("--identity-rewrite", serve_rewrite, "answer rewrite requests with the question unchanged");

  // synth-dataset
  auto* synth = app.add_subcommand("synth-dataset", "Write a desk-scale dataset labelled by a toy model");
  ModelFlags synth_flags;
  DeskDatasetOptions desk;
  std::string synth_dir;
  synth_flags.add(synth);
  synth->add_option("dir", synth_dir, "output directory")->required();
  synth->add_option("--count", desk.count, "number of records");
  synth->add_option("--seed", desk.seed, "image seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunConfig config = load_run_config(config_path);
      auto to_size = [](const std::string& s, const char* what) -> std::size_t {
        try {
          std::size_t pos = 0;
          const auto v = std::stoull(s, &pos);
          if (pos != s.size()) throw std::invalid_argument(s);
          return v;
        } catch (const std::exception&) {
          throw ConfigError(std::string(what) + " must be a non-negative integer");
        }
      };
      if (!iters.empty()) ov.iterations = static_cast<int>(to_size(iters, "--iters"));
      if (!sample_size.empty()) ov.sample_size = to_size(sample_size, "--sample-size");
      if (!seed.empty()) ov.seed = to_size(seed, "--seed");
      if (!out.empty()) ov.out = out;
      if (!workers.empty()) ov.workers = to_size(workers, "--workers");
      apply_overrides(config, ov);
      const int code = run_and_report(config, log_line);
      std::cerr << "results in " << config.out.string() << '\n';
      return code;
    }
    if (*report) {
      const LoadedRows loaded = load_rows(store_path, tolerant);
      for (const auto& issue : loaded.issues) {
        std::cerr << store_path << ":" << issue.line << ": skipped: " << issue.message << '\n';
      }
      if (loaded.rows.empty()) throw ConfigError("store " + store_path + " holds no rows");
      ReportOptions options;
      options.layout = layout == "attacks" ? TableLayout::kAttacks : TableLayout::kStrategies;
      options.average_tasks = average;
      const std::string text = format == "csv" ? render_csv(loaded.rows) : render_markdown(loaded.rows, options);
      if (report_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(report_out, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + report_out);
        f << text;
      }
      return kExitOk;
    }
    if (*convert) {
      std::vector<DatasetRecord> records;
      if (conv_format == "coco") {
        records = convert_coco_captions(read_file(annotations), pattern);
      } else {
        if (questions.empty()) throw ConfigError("--questions is required for vqav2");
        records = convert_vqav2(read_file(questions), read_file(annotations), pattern);
      }
      Dataset ds;
      ds.records = std::move(records);
      write_dataset(ds, conv_out);
      std::cerr << "wrote " << ds.size() << " records to " << conv_out << '\n';
      return kExitOk;
    }
    if (*rcache) {
      RewriteCache cache(cache_path);
      if (list) {
        for (const auto& r : cache.records()) {
          std::cout << r.strategy << "\t" << r.question << "\t" << r.rewritten << "\t" << r.source << '\n';
        }
        return kExitOk;
      }
      if (cache_dataset.empty() || cache_strategies.empty()) {
        throw ConfigError("filling the cache needs --dataset and --strategy");
      }
      std::unique_ptr<RewriterClient> client;
      if (rewriter_spec == "identity") {
        client = std::make_unique<IdentityRewriter>();
      } else if (rewriter_spec.starts_with("fixture:")) {
        client = std::make_unique<FixtureRewriter>(std::filesystem::path(rewriter_spec.substr(8)));
      } else {
        try {
          client = std::make_unique<RemoteRewriter>(open_transport(rewriter_spec));
        } catch (const Error& e) {
          throw EndpointError(e.what());
        }
      }
      const Dataset ds = load_dataset(cache_dataset);
      RewriteOptions ro;
      ro.fallback_to_original = false;
      std::size_t added = 0;
      for (const auto& name : cache_strategies) {
        const auto strategy = parse_vqa_strategy(name);
        if (!strategy || *strategy == VqaStrategy::kOriginal) throw ConfigError("not a rewrite strategy: " + name);
        for (const auto& rec : ds.records) {
          if (rec.task != TaskType::kVqa) continue;
          const RewriteOutcome r = rewrite_question(*client, *strategy, rec.question, ro, &cache);
          added += !r.from_cache;
        }
      }
      std::cerr << added << " new rewrites, " << cache.records().size() << " cached in total\n";
      return kExitOk;
    }
    if (*check) {
      std::unique_ptr<DifferentiableModel> twin;
      if (with_twin) {
        twin = make_model(twin_flags.spec());
        check_opts.twin = twin.get();
      }
      std::unique_ptr<Transport> transport;
      try {
        transport = open_transport(endpoint);
      } catch (const Error& e) {
        throw EndpointError(e.what());
      }
      const ProtocolCheckReport result = protocol_check(*transport, check_opts);
      for (const auto& c : result.checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
      }
      return result.passed() ? kExitOk : kExitEndpoint;
    }
    if (*serve) {
      const auto model = make_model(serve_flags.spec());
      IdentityRewriter identity;
      OracleServer server(*model, serve_rewrite ? &identity : nullptr);
      server.serve(STDIN_FILENO, STDOUT_FILENO);
      return kExitOk;
    }
    if (*synth) {
      desk.dir = synth_dir;
      desk.model = synth_flags.spec();
      const auto path = write_desk_dataset(desk);
      std::cerr << "wrote " << desk.count << " records to " << path.string() << '\n';
      return kExitOk;
    }
  } catch (const EndpointError& e) {
    std::cerr << "endpoint error: " << e.what() << '\n';
    return kExitEndpoint;
  } catch (const ProtocolError& e) {
    std::cerr << "endpoint error: " << e.what() << '\n';
    return kExitEndpoint;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
