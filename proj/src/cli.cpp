#include "geometre/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "geometre/config.hpp"
#include "geometre/dataset.hpp"
#include "geometre/embedding_store.hpp"
#include "geometre/errors.hpp"
#include "geometre/evaluator.hpp"
#include "geometre/geometry.hpp"
#include "geometre/trainer.hpp"
#include "geometre/transitivity.hpp"

namespace geometre {

namespace fs = std::filesystem;

namespace {

// Flags that mirror config-file keys. Values stay as strings so the typed
// parsing (and its error messages) is shared with the config file.
class KvFlags {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    opts_.emplace_back(app->add_option(flag, values_[key], help), key);
  }

  // file < flags, with the winning source of every key logged.
  KeyValues merge(const KeyValues& file, const std::string& what) const {
    KeyValues kv = file;
    for (const auto& [key, value] : file) {
      spdlog::info("{}: {} = {} (config file)", what, key, value);
    }
    for (const auto& [opt, key] : opts_) {
      if (opt->count() == 0) continue;
      kv[key] = values_.at(key);
      spdlog::info("{}: {} = {} (flag)", what, key, kv[key]);
    }
    return kv;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<CLI::Option*, std::string>> opts_;
};

struct Globals {
  std::string config;
  std::string log_level = "info";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::size_t threads = 1;

  KeyValues file_kv() const {
    KeyValues kv;
    if (!config.empty()) kv = read_key_values(config);
    if (seed_opt && seed_opt->count()) kv["seed"] = std::to_string(seed);
    return kv;
  }
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void check_compatible(const EmbeddingStore& store, const Dataset& data) {
  if (store.num_entities() != data.num_entities() ||
      store.num_relations() != data.num_relations()) {
    throw ValidationError("checkpoint has " + std::to_string(store.num_entities()) +
                          " entities / " + std::to_string(store.num_relations()) +
                          " relations, dataset has " +
                          std::to_string(data.num_entities()) + " / " +
                          std::to_string(data.num_relations()));
  }
}

nlohmann::json annotations_for(const TrainingConfig& cfg, const std::string& tag) {
  nlohmann::json a;
  a["alpha"] = cfg.alpha;
  a["lambda"] = cfg.lambda;
  a["transitive_scoring"] = cfg.transitive_loss_enabled;
  a["checkpoint"] = tag;
  a["training_config"] = nlohmann::json::parse(cfg.to_json().dump());
  return a;
}

// ---- train -----------------------------------------------------------------

struct TrainCmd {
  std::string data, out;
  KvFlags flags;

  void setup(CLI::App* app) {
    app->add_option("--data", data, "Dataset directory")->required();
    app->add_option("--out", out, "Run directory (checkpoints, metrics)")->required();
    flags.add(app, "--steps", "steps", "Optimizer steps");
    flags.add(app, "--dim", "dim", "Embedding dimension");
    flags.add(app, "--alpha", "alpha", "Inside-distance weight");
    flags.add(app, "--gamma", "gamma", "Loss margin");
    flags.add(app, "--lambda", "lambda", "Ordering margin");
    flags.add(app, "--learning-rate", "learning_rate", "Adam learning rate");
    flags.add(app, "--batch-size", "batch_size", "Queries per batch");
    flags.add(app, "--negatives", "negatives_k", "Negatives per query");
    flags.add(app, "--answer-embedding", "answer_embedding",
              "Separate answer points: yes|no");
    flags.add(app, "--projection-mode", "projection_mode",
              "full|additive|multiplicative");
    flags.add(app, "--transitive-loss", "transitive_loss",
              "Ordering distance and regularizer: true|false");
    flags.add(app, "--answer-consistency-weight", "answer_consistency_weight",
              "Weight of the answer tying term");
    flags.add(app, "--init-gamma", "init_gamma", "Initialization scale (0: gamma)");
    flags.add(app, "--log-every", "log_every", "Loss logging interval");
    flags.add(app, "--eval-every", "eval_every", "Validation interval (0: end only)");
    flags.add(app, "--patience", "patience", "Early-stopping patience in steps");
  }

  int run(const Globals& g, std::ostream& out_stream) {
    const KeyValues kv = flags.merge(g.file_kv(), "train");
    const TrainingConfig cfg = TrainingConfig::from_kv(kv);
    cfg.validate();
    const Dataset data = load_dataset(data_dir());
    const fs::path dir(out);
    fs::create_directories(dir);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
    TrainHooks hooks;
    hooks.eval_threads = g.threads;
    hooks.on_log = [&](const nlohmann::ordered_json& rec) {
      metrics << rec.dump() << '\n';
      metrics.flush();
      spdlog::info("{}", rec.dump());
    };
    const TrainResult res = train(data, cfg, hooks);
    save_checkpoint(res.final_store, dir / "final.ckpt", annotations_for(cfg, "final"));
    if (res.best_store) {
      save_checkpoint(*res.best_store, dir / "best.ckpt", annotations_for(cfg, "best"));
    }
    write_file(dir / "config.json", cfg.to_json().dump(2) + "\n");
    nlohmann::ordered_json summary;
    summary["steps_run"] = res.steps_run;
    summary["initial_loss"] = res.initial_loss;
    summary["final_loss"] = res.final_loss;
    if (res.best_step) {
      summary["best_step"] = *res.best_step;
      summary["best_valid_mrr"] = std::round(1000.0 * res.best_valid_mrr) / 10.0;
    }
    out_stream << summary.dump() << '\n';
    return kExitOk;
  }

  fs::path data_dir() const { return data; }
};

// ---- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  std::string checkpoint, data, split = "test", csv, json;
  std::optional<double> alpha, lambda;

  void setup(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    app->add_option("--data", data, "Dataset directory")->required();
    app->add_option("--split", split, "valid|test")
        ->check(CLI::IsMember({"train", "valid", "test"}));
    app->add_option("--csv", csv, "Write the per-type CSV here instead of stdout");
    app->add_option("--json", json, "Write the JSON summary here");
    app->add_option("--alpha", alpha, "Override the checkpoint's alpha");
    app->add_option("--lambda", lambda, "Override the checkpoint's lambda");
  }

  int run(const Globals& g, std::ostream& out) {
    nlohmann::json ann;
    const EmbeddingStore store = load_checkpoint(checkpoint, std::nullopt, &ann);
    const Dataset ds = load_dataset(data);
    check_compatible(store, ds);
    EvalConfig cfg;
    cfg.alpha = alpha.value_or(ann.value("alpha", cfg.alpha));
    cfg.lambda = lambda.value_or(ann.value("lambda", cfg.lambda));
    cfg.transitive_scoring = ann.value("transitive_scoring", true);
    cfg.threads = g.threads;
    spdlog::info("evaluate: alpha = {}, lambda = {}, transitive scoring {}", cfg.alpha,
                 cfg.lambda, cfg.transitive_scoring ? "on" : "off");
    const EvalReport report = evaluate(ds, split_from_string(split), store, cfg);
    if (csv.empty()) {
      out << report.to_csv();
    } else {
      write_file(csv, report.to_csv());
    }
    if (!json.empty()) write_file(json, report.to_json().dump(2) + "\n");
    return kExitOk;
  }
};

// ---- analyze-transitivity --------------------------------------------------

struct AnalyzeCmd {
  RelationId relation = 0;
  std::string checkpoint, data, out_csv, summary;

  void setup(CLI::App* app) {
    app->add_option("--relation", relation, "Transitive relation id")->required();
    app->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    app->add_option("--data", data, "Dataset directory (training triples)")->required();
    app->add_option("--out", out_csv, "Chain preservation CSV")->required();
    app->add_option("--summary", summary, "Write the JSON summary here instead of stdout");
  }

  int run(const Globals&, std::ostream& out) {
    const EmbeddingStore store = load_checkpoint(checkpoint);
    const Dataset ds = load_dataset(data);
    check_compatible(store, ds);
    if (relation >= ds.num_relations()) {
      throw ValidationError("relation " + std::to_string(relation) + " out of range");
    }
    if (!store.transitive_target(relation)) {
      throw ValidationError("relation " + std::to_string(relation) +
                            " is not transitive");
    }
    std::size_t truncated = 0;
    const auto chains = extract_chains(ds.triples[0], relation, &truncated);
    chain_preservation_report(chains, store, relation, out_csv);
    nlohmann::ordered_json j;
    j["relation"] = relation;
    j["n_chains"] = chains.size();
    j["truncated_chains"] = truncated;
    bool scored = std::any_of(chains.begin(), chains.end(),
                              [](const Chain& c) { return c.entities.size() >= 2; });
    if (scored) {
      j["spearman_mean"] = spearman_chain_score(chains, store, relation);
    } else {
      j["spearman_mean"] = nullptr;
    }
    if (summary.empty()) {
      out << j.dump() << '\n';
    } else {
      write_file(summary, j.dump(2) + "\n");
    }
    return kExitOk;
  }
};

// ---- generate-synthetic ----------------------------------------------------

struct GenerateCmd {
  std::string out;
  KvFlags flags;

  void setup(CLI::App* app) {
    app->add_option("--out", out, "Output dataset directory")->required();
    flags.add(app, "--entities", "n_entities", "Number of entities");
    flags.add(app, "--relations", "n_relations", "Number of relations");
    flags.add(app, "--transitive", "n_transitive", "Number of transitive relations");
    flags.add(app, "--chain-length", "chain_length", "Entities per chain");
    flags.add(app, "--density", "density", "Edge density of the other relations");
    flags.add(app, "--inverse-relations", "inverse_relations",
              "Add inverse transitive relations: true|false");
    flags.add(app, "--closure-train-fraction", "closure_train_fraction",
              "Share of closure edges kept in train");
  }

  int run(const Globals& g, std::ostream&) {
    const KeyValues kv = flags.merge(g.file_kv(), "generate-synthetic");
    const Dataset data = generate_synthetic(synthetic_config_from_kv(kv));
    write_dataset(data, out);
    return kExitOk;
  }
};

// ---- verify-geometry -------------------------------------------------------

struct VerifyCmd {
  std::vector<int> dims = {1, 2, 4, 8};
  std::uint64_t samples = 1'000'000;
  double length = 10.0, sigma = 1.0;
  std::string out;

  void setup(CLI::App* app) {
    app->add_option("--dims", dims, "Dimensions to test")
        ->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app->add_option("--samples", samples, "Monte-Carlo samples per dimension");
    app->add_option("--length", length, "Side of the center cube");
    app->add_option("--sigma", sigma, "Box offset");
    app->add_option("--out", out, "Write the CSV here instead of stdout");
  }

  int run(const Globals& g, std::ostream& os) {
    std::string csv = "n,closed_form,monte_carlo,std_error,exact\n";
    char buf[160];
    for (int n : dims) {
      const auto e = estimate_overlap_probability(length, sigma, n, samples, g.seed);
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n", n,
                    overlap_probability_closed_form(length, sigma, n), e.estimate,
                    e.std_error, overlap_probability_exact(length, sigma, n));
      csv += buf;
    }
    if (out.empty()) {
      os << csv;
    } else {
      write_file(out, csv);
    }
    return kExitOk;
  }
};

// ---- convert-check ---------------------------------------------------------

struct ConvertCheckCmd {
  std::string data, out;
  std::vector<std::string> expect;

  void setup(CLI::App* app) {
    app->add_option("--data", data, "Converted dataset directory")->required();
    app->add_option("--expect", expect,
                    "Expected count, e.g. train.1p=103509 or test.total=18356")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app->add_option("--out", out, "Write the counts CSV here instead of stdout");
  }

  int run(const Globals&, std::ostream& os, std::ostream& err) {
    const Dataset ds = load_dataset(data);
    std::map<std::string, std::size_t> counts;
    std::string csv = "split,type,count\n";
    for (Split s : kAllSplits) {
      const auto by_type = count_by_type(ds.queries_of(s));
      std::size_t total = 0;
      for (QueryType t : kAllQueryTypes) {
        const auto it = by_type.find(t);
        const std::size_t n = it == by_type.end() ? 0 : it->second;
        total += n;
        const std::string key = std::string(to_string(s)) + "." + std::string(to_string(t));
        counts[key] = n;
        csv += std::string(to_string(s)) + "," + std::string(to_string(t)) + "," +
               std::to_string(n) + "\n";
      }
      counts[std::string(to_string(s)) + ".total"] = total;
      csv += std::string(to_string(s)) + ",total," + std::to_string(total) + "\n";
    }
    if (out.empty()) {
      os << csv;
    } else {
      write_file(out, csv);
    }
    int status = kExitOk;
    for (const std::string& e : expect) {
      const auto eq = e.find('=');
      if (eq == std::string::npos) throw ParseError("--expect " + e + ": want key=count");
      const std::string key = e.substr(0, eq);
      const auto it = counts.find(key);
      if (it == counts.end()) throw ParseError("--expect: unknown key " + key);
      const std::size_t want = kv_uint({{key, e.substr(eq + 1)}}, key, 0);
      if (it->second != want) {
        err << "count mismatch: " << key << " = " << it->second << ", expected "
            << want << "\n";
        status = kExitInvalid;
      }
    }
    return status;
  }
};

// Puts the previous default logger back; ours writes into a caller's stream
// that may not outlive the call.
class LoggerGuard {
 public:
  LoggerGuard() : saved_(spdlog::default_logger()) {}
  ~LoggerGuard() { spdlog::set_default_logger(saved_); }
  LoggerGuard(const LoggerGuard&) = delete;
  LoggerGuard& operator=(const LoggerGuard&) = delete;

 private:
  std::shared_ptr<spdlog::logger> saved_;
};

void configure_logging(std::ostream& err, const std::string& level) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("geometre", sink);
  logger->set_pattern("[%l] %v");
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") {
    throw ParseError("--log-level: unknown level " + level);
  }
  logger->set_level(lvl);
  spdlog::set_default_logger(logger);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Box-embedding engine for multi-hop knowledge-graph queries",
               "geometre"};
  app.require_subcommand(1);
  // Repeating a flag keeps the last value.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Globals g;
  app.add_option("--config", g.config, "key = value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
  g.seed_opt = app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads for evaluation")
      ->check(CLI::PositiveNumber);

  TrainCmd train_cmd;
  EvaluateCmd eval_cmd;
  AnalyzeCmd analyze_cmd;
  GenerateCmd gen_cmd;
  VerifyCmd verify_cmd;
  ConvertCheckCmd convert_cmd;
  auto* train_app = app.add_subcommand("train", "Train a store on a dataset");
  auto* eval_app = app.add_subcommand("evaluate", "Filtered MRR of a checkpoint");
  auto* analyze_app = app.add_subcommand(
      "analyze-transitivity", "Chain order vs embedding order for a relation");
  auto* gen_app = app.add_subcommand("generate-synthetic", "Write a synthetic dataset");
  auto* verify_app = app.add_subcommand(
      "verify-geometry", "Closed-form vs Monte-Carlo box overlap probabilities");
  auto* convert_app = app.add_subcommand(
      "convert-check", "Validate a converted dataset and report per-type counts");
  train_cmd.setup(train_app);
  eval_cmd.setup(eval_app);
  analyze_cmd.setup(analyze_app);
  gen_cmd.setup(gen_app);
  verify_cmd.setup(verify_app);
  convert_cmd.setup(convert_app);
  // Global options may also follow the subcommand.
  for (auto* sub : {train_app, eval_app, analyze_app, gen_app, verify_app, convert_app}) {
    sub->fallthrough();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  LoggerGuard restore_logger;
  try {
    configure_logging(err, g.log_level);
    if (*train_app) return train_cmd.run(g, out);
    if (*eval_app) return eval_cmd.run(g, out);
    if (*analyze_app) return analyze_cmd.run(g, out);
    if (*gen_app) return gen_cmd.run(g, out);
    if (*verify_app) return verify_cmd.run(g, out);
    if (*convert_app) return convert_cmd.run(g, out, err);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace geometre
