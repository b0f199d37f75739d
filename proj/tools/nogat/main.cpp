// nogat: prepare datasets, train, run the ablation and check gradients.
//
// Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numerical error.

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "nogat/config.hpp"
#include "nogat/error.hpp"
#include "nogat/gradcheck_suite.hpp"
#include "nogat/io.hpp"
#include "nogat/report.hpp"
#include "nogat/training.hpp"

namespace fs = std::filesystem;
using namespace nogat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct PublishedStats {
  const char* name;
  Index nodes, edges, features;
  int classes;
};

constexpr PublishedStats kPublished[] = {
    {"cora", 2708, 10556, 1433, 7},      {"citeseer", 3327, 9228, 3703, 6},
    {"texas", 183, 325, 1703, 5},        {"cornell", 183, 298, 1703, 5},
    {"wisconsin", 251, 515, 1703, 5},    {"squirrel", 5201, 217073, 2089, 5},
    {"actor", 7600, 33391, 931, 5},
};

// Flags that map one-to-one onto config keys.
const std::vector<std::pair<std::string, std::string>> kConfigFlags{
    {"lr", "learning rate"},
    {"heads", "attention heads in the hidden layer"},
    {"hidden", "hidden units per head"},
    {"lambda", "L2 penalty on all parameters"},
    {"hops", "overlay hops"},
    {"xi", "per-hop decay of the overlay"},
    {"dropout", "dropout rate"},
    {"seed", "initialisation and dropout seed"},
    {"split-seed", "seed of the random split"},
    {"variant", "gat | nogat | nogat-cn | nogat-ra | nogat-jaccard"},
    {"split", "planetoid-public | random-60-20-20"},
    {"max-epochs", "epoch limit"},
    {"patience", "early-stopping patience"},
    {"eps-init", "initial self-feature weight"},
    {"output-heads", "heads in the output layer"},
};

std::string config_key(std::string flag) {
  for (auto& c : flag)
    if (c == '-') c = '_';
  return flag;
}

fs::path default_data_dir() {
  if (const char* env = std::getenv("NOGAT_DATA_DIR"); env && *env) return env;
  return "data";
}

struct RunOptions {
  std::string dataset;
  std::string config_file;
  std::string data_dir;
  std::map<std::string, std::string> overrides;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--dataset", o.dataset, "dataset name (cora, citeseer, texas, ...)")->required();
  cmd->add_option("--config", o.config_file, "key = value config file");
  cmd->add_option("--data-dir", o.data_dir, "dataset directory (default $NOGAT_DATA_DIR or ./data)");
  for (const auto& [flag, help] : kConfigFlags)
    cmd->add_option("--" + flag, o.overrides[config_key(flag)], help);
}

ModelConfig resolve_config(const RunOptions& o, const CLI::App* cmd) {
  ModelConfig cfg = defaults_for(o.dataset);
  if (!o.config_file.empty()) {
    cfg = load_config_file(o.config_file);
    cfg.dataset = o.dataset;
  }
  for (const auto& [flag, help] : kConfigFlags)
    if (cmd->count("--" + flag) > 0) cfg.set(config_key(flag), o.overrides.at(config_key(flag)));
  cfg.validate();
  return cfg;
}

fs::path data_dir_of(const RunOptions& o) {
  return o.data_dir.empty() ? default_data_dir() : fs::path(o.data_dir);
}

Graph load_split(const RunOptions& o, const ModelConfig& cfg) {
  Graph g = load_dataset(data_dir_of(o), o.dataset);
  return make_splits(g, cfg.split, cfg.split_seed);
}

void write_manifest(const fs::path& path, const ModelConfig& cfg, const Graph& g,
                    const fs::path& data_dir, const std::string& command_line) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# nogat run manifest\n";
  out << "command = " << command_line << "\n";
  out << "data_dir = " << data_dir.string() << "\n";
  out << "nodes = " << g.num_nodes() << "\n";
  out << "stored_edges = " << g.adjacency.nnz() << "\n";
  out << "features = " << g.num_features() << "\n";
  out << "classes = " << g.num_classes << "\n";
  out << "train_nodes = " << mask_count(g.train_mask) << "\n";
  out << "val_nodes = " << mask_count(g.val_mask) << "\n";
  out << "test_nodes = " << mask_count(g.test_mask) << "\n";
  out << format_config(cfg);
}

int cmd_prepare(const std::string& dataset, const std::string& data_dir, const std::string& out) {
  const fs::path dir = data_dir.empty() ? default_data_dir() : fs::path(data_dir);
  LoadDiagnostics diag;
  Graph g = load_dataset(dir, dataset, &diag);
  g.validate();
  const fs::path target = out.empty() ? dir / (dataset + ".nogat") : fs::path(out);

  const Index stored = g.adjacency.nnz();
  std::cout << "dataset      " << dataset << "\n"
            << "nodes        " << g.num_nodes() << "\n"
            << "edges        " << stored << " stored (" << stored / 2 << " undirected)\n"
            << "features     " << g.num_features() << "\n"
            << "classes      " << g.num_classes << "\n"
            << "edge rows    " << diag.edge_rows << ", dropped self-loops " << diag.self_loops
            << ", unknown endpoints " << diag.unknown_endpoint << ", duplicates "
            << diag.duplicates << "\n";
  for (const auto& p : kPublished) {
    if (dataset != p.name) continue;
    auto cmp = [](const char* what, Index got, Index want) {
      std::cout << "  " << std::left << std::setw(9) << what << got << " vs published " << want
                << (got == want ? "" : "  (differs)") << "\n";
    };
    std::cout << "comparison with published statistics:\n";
    cmp("nodes", g.num_nodes(), p.nodes);
    cmp("edges", stored, p.edges);
    cmp("features", g.num_features(), p.features);
    cmp("classes", g.num_classes, p.classes);
  }
  save_graph(g, target);
  std::cout << "wrote " << target.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunOptions& o, const CLI::App* cmd, const std::string& out_dir,
              const std::string& command_line) {
  const ModelConfig cfg = resolve_config(o, cmd);
  const Graph g = load_split(o, cfg);
  const fs::path out = out_dir.empty() ? fs::path("runs") / o.dataset : fs::path(out_dir);
  fs::create_directories(out);
  write_manifest(out / "manifest.txt", cfg, g, data_dir_of(o), command_line);

  ad::ParamStore best;
  TrainHooks hooks;
  hooks.best_params = &best;
  const TrainReport report = train(g, cfg, hooks);
  write_run_outputs(report, out);
  save_params(best, out / "params.bin");
  std::cout << std::fixed << std::setprecision(4) << to_string(cfg.variant) << " on " << o.dataset
            << ": test accuracy " << report.test_acc << " (best epoch " << report.best_epoch
            << " of " << report.epochs.size() << ", val " << report.best_val_acc << ")\n"
            << "outputs in " << out.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const RunOptions& o, const CLI::App* cmd, const std::string& out_dir, int seeds) {
  if (seeds < 1) throw ConfigError("--seeds must be >= 1");
  const ModelConfig base = resolve_config(o, cmd);
  const Graph raw = load_dataset(data_dir_of(o), o.dataset);
  const fs::path out = out_dir.empty() ? fs::path("runs") / (o.dataset + "-ablation") : fs::path(out_dir);
  fs::create_directories(out);

  std::ofstream runs(out / "runs.csv");
  runs << "variant,seed,split_seed,best_epoch,test_acc\n";
  std::ofstream table(out / "ablation.csv");
  table << "variant,seeds,mean_test_acc,std_test_acc\n";
  for (Variant v : {Variant::Gat, Variant::NoGatCn, Variant::NoGatJaccard, Variant::NoGatRa,
                    Variant::NoGat}) {
    std::vector<double> accs;
    for (int s = 0; s < seeds; ++s) {
      ModelConfig cfg = base;
      cfg.variant = v;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      if (cfg.split == SplitPolicy::Random602020) cfg.split_seed = base.split_seed + static_cast<std::uint64_t>(s);
      const Graph g = make_splits(raw, cfg.split, cfg.split_seed);
      const TrainReport r = train(g, cfg);
      accs.push_back(100.0 * r.test_acc);
      runs << to_string(v) << "," << cfg.seed << "," << cfg.split_seed << "," << r.best_epoch << ","
           << std::setprecision(17) << r.test_acc << "\n";
    }
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
    double ss = 0.0;
    for (double a : accs) ss += (a - mean) * (a - mean);
    const double sd = accs.size() > 1 ? std::sqrt(ss / (accs.size() - 1)) : 0.0;
    table << to_string(v) << "," << seeds << "," << std::fixed << std::setprecision(2) << mean << ","
          << sd << "\n";
    table.unsetf(std::ios::fixed);
    std::cout << std::left << std::setw(14) << to_string(v) << std::fixed << std::setprecision(2)
              << mean << " +/- " << sd << "\n";
    std::cout.unsetf(std::ios::fixed);
  }
  std::cout << "wrote " << (out / "ablation.csv").string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& level, bool fault) {
  bool ok = true;
  for (const auto& line : run_gradcheck(parse_grad_level(level), fault)) {
    ok = ok && line.pass();
    std::cout << (line.pass() ? "ok    " : "FAIL  ") << std::left << std::setw(26) << line.name
              << std::scientific << std::setprecision(3) << line.max_relative_error << " (< "
              << line.threshold << ", " << line.entries << " entries)\n";
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NO-GAT node classification toolkit"};
  app.require_subcommand(1);

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  auto* prepare = app.add_subcommand("prepare", "load raw files, print statistics, write a cache");
  std::string prep_dataset, prep_dir, prep_out;
  prepare->add_option("--dataset", prep_dataset, "dataset name")->required();
  prepare->add_option("--data-dir", prep_dir, "dataset directory (default $NOGAT_DATA_DIR or ./data)");
  prepare->add_option("--out", prep_out, "cache path (default <data-dir>/<dataset>.nogat)");

  RunOptions train_opts;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "train one model and write its logs");
  add_run_options(train_cmd, train_opts);
  train_cmd->add_option("--out", train_out, "output directory (default runs/<dataset>)");

  RunOptions ablate_opts;
  std::string ablate_out;
  int seeds = 10;
  auto* ablate = app.add_subcommand("ablate", "compare GAT, heuristic and learned structure");
  add_run_options(ablate, ablate_opts);
  ablate->add_option("--out", ablate_out, "output directory");
  ablate->add_option("--seeds", seeds, "runs per variant")->capture_default_str();

  std::string level = "model";
  bool fault = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("level", level, "unit | layer | model")->capture_default_str();
  grad->add_flag("--inject-fault", fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*prepare) return cmd_prepare(prep_dataset, prep_dir, prep_out);
    if (*train_cmd) return cmd_train(train_opts, train_cmd, train_out, command_line);
    if (*ablate) return cmd_ablate(ablate_opts, ablate, ablate_out, seeds);
    if (*grad) return cmd_gradcheck(level, fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
