// Acceptance suite. Prints one line per criterion:
//   [PASS|FAIL|SKIP] <n> <title>: <details>
// Usage: nogat_acceptance [--only N]... [--data-dir DIR] [--cli PATH]
// Exit status: 0 all selected criteria passed, 1 any failed,
// 77 nothing failed but at least one criterion was skipped.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "nogat/attention.hpp"
#include "nogat/config.hpp"
#include "nogat/gradcheck_suite.hpp"
#include "nogat/heuristics.hpp"
#include "nogat/io.hpp"
#include "nogat/report.hpp"
#include "nogat/training.hpp"
#include "reference.hpp"

using namespace nogat;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string details;
};

struct Options {
  std::set<int> only;
  std::optional<fs::path> data_dir;
  std::optional<fs::path> cli;
};

constexpr int kSeeds = 10;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats stats(const std::vector<double>& xs) {
  Stats s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Criteria that need no external data.

Outcome gradient_suite(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  double unit_worst = 0.0, model_err = 0.0;
  std::string unit_name;
  bool ok = true;
  for (const auto& line : run_gradcheck(GradLevel::Unit)) {
    ok = ok && line.pass();
    if (line.max_relative_error >= unit_worst) {
      unit_worst = line.max_relative_error;
      unit_name = line.name;
    }
  }
  for (const auto& line : run_gradcheck(GradLevel::Model)) {
    ok = ok && line.pass();
    model_err = line.max_relative_error;
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 30.0;
  return {ok ? Status::Pass : Status::Fail,
          "model " + sci(model_err) + " (< 1e-4), worst unit " + unit_name + " " + sci(unit_worst) +
              " (< 1e-6), " + fmt(elapsed) + " s (< 30 s)"};
}

std::set<Index> neighbours(const SparseMatrix& a, Index u) {
  auto c = a.row_cols(u);
  return {c.begin(), c.end()};
}

Outcome heuristic_oracle(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240601);
  std::size_t mismatches = 0, entries = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(10));
    Graph g;
    g.adjacency = toy::to_sparse(toy::random_adjacency(n, rng.uniform(0.0, 0.8), rng));
    g.features = Matrix(n, 1, 1.0);
    g.labels.assign(static_cast<std::size_t>(n), 0);
    g.num_classes = 1;
    auto cn = heuristic_edge_scores(g, Heuristic::CommonNeighbors).scores;
    auto jc = heuristic_edge_scores(g, Heuristic::Jaccard).scores;
    auto ra = heuristic_edge_scores(g, Heuristic::ResourceAllocation).scores;
    for (Index u = 0; u < n; ++u) {
      for (Index v : cn.row_cols(u)) {
        const auto nu = neighbours(g.adjacency, u), nv = neighbours(g.adjacency, v);
        double inter = 0.0, uni = 0.0, res = 0.0;
        for (Index z = 0; z < n; ++z) {
          const bool a = nu.count(z) > 0, b = nv.count(z) > 0;
          if (a && b) {
            inter += 1.0;
            res += 1.0 / static_cast<double>(neighbours(g.adjacency, z).size());
          }
          if (a || b) uni += 1.0;
        }
        const double jac = uni == 0.0 ? 0.0 : inter / uni;
        mismatches += (cn.at(u, v) != inter) + (jc.at(u, v) != jac) + (ra.at(u, v) != res);
        entries += 3;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  const bool ok = mismatches == 0 && elapsed < 10.0;
  return {ok ? Status::Pass : Status::Fail,
          std::to_string(mismatches) + " mismatches over " + std::to_string(entries) +
              " table entries, " + fmt(elapsed) + " s (< 10 s)"};
}

Outcome structural_oracle(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(777);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(11));
    auto dense_a = toy::random_adjacency(n, rng.uniform(0.1, 0.6), rng);
    auto a = toy::to_sparse(dense_a);
    StructSettings s;
    s.edge_width = 1 + static_cast<Index>(rng.below(6));
    s.node_width = 1 + static_cast<Index>(rng.below(6));
    s.scale_width = 1 + static_cast<Index>(rng.below(6));
    s.hops = 1 + static_cast<int>(rng.below(3));
    s.xi = rng.uniform(0.1, 1.0);
    ad::ParamStore store;
    StructGenerator gen(store, "g", s, rng);
    toy::jitter(store, rng, 1.0);
    auto an = normalize_adjacency(a, degrees(a));
    auto att = add_self_loops(a);
    auto plan = make_overlay_plan(an, att, s);
    ad::Tape tape;
    auto h = node_struct_features(tape, store, gen, an);
    auto z = overlay_matrix(tape, store, gen, plan, h);
    auto c = correlation(plan, z).value();

    auto dn = toy::normalized(dense_a);
    auto h_ref = reference::struct_features(store, "g", dn, s.edge_width);
    auto z_ref = reference::overlay(store, "g", dn, h_ref, s.hops, s.xi, 2);
    auto c_ref = reference::gram(z_ref);
    for (Index i = 0; i < n; ++i) worst = std::max(worst, std::abs(h.value()(i, 0) - h_ref[i]));
    auto zd = toy::dense_of(plan.hop_weights.with_values(z.value().data()));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) worst = std::max(worst, std::abs(zd[i][j] - z_ref[i][j]));
    Index e = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j : att.row_cols(i)) worst = std::max(worst, std::abs(c(e++, 0) - c_ref[i][j]));
  }
  const double elapsed = seconds_since(t0);
  const bool ok = worst <= 1e-10 && elapsed < 30.0;
  return {ok ? Status::Pass : Status::Fail,
          "max abs deviation " + sci(worst) + " (<= 1e-10) over 50 graphs, " + fmt(elapsed) +
              " s (< 30 s)"};
}

Outcome gat_reduction(const Options&) {
  Rng rng(4242);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.below(12));
    Graph g = toy::random_graph(n, 6, 3, rng.uniform(0.1, 0.5), rng);
    ModelSpec spec;
    spec.heads = 2;
    spec.hidden = 4;
    spec.output_heads = 1 + static_cast<Index>(rng.below(2));
    spec.dropout = 0.0;
    spec.structure.edge_width = spec.structure.node_width = spec.structure.scale_width = 4;
    ad::ParamStore full, base;
    spec.variant = Variant::NoGat;
    NoGatModel nogat(spec, 6, 3, full, rng);
    ModelSpec gat_spec = spec;
    gat_spec.variant = Variant::Gat;
    NoGatModel gat(gat_spec, 6, 3, base, rng);
    toy::jitter(full, rng, 0.7);
    for (const char* layer : {"layer0", "layer1"}) {
      const std::string p(layer);
      full.at(p + ".g_n").value.fill(-1e6);
      full.at(p + ".g_n").frozen = true;
      full.at(p + ".eps").value.fill(0.0);
    }
    for (auto& e : base) e.value = full.at(e.name).value;
    Rng r1(0), r2(0);
    ad::Tape t1, t2;
    auto a = nogat.forward(t1, full, make_context(g, spec, true), false, r1).log_probs.value();
    auto b = gat.forward(t2, base, make_context(g, gat_spec, true), false, r2).log_probs.value();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {worst <= 1e-8 ? Status::Pass : Status::Fail,
          "max abs output difference " + sci(worst) + " (<= 1e-8) over 20 toy graphs"};
}

std::optional<std::string> run_cli_twice(const Options& opt, const fs::path& work) {
  Rng rng(5);
  Graph g = toy::planted_graph(60, 3, 8, rng);
  g.name = "planted";
  fs::create_directories(work / "data");
  save_graph(g, work / "data" / "planted.nogat");
  std::string logs[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work / ("run" + std::to_string(run));
    const std::string cmd = "\"" + opt.cli->string() + "\" train --dataset planted --data-dir \"" +
                            (work / "data").string() + "\" --out \"" + out.string() +
                            "\" --variant nogat --seed 3 --max-epochs 25 --heads 2 --hidden 4 > \"" +
                            (work / "cli.txt").string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return std::nullopt;
    std::ifstream in(out / "log.jsonl");
    std::stringstream ss;
    ss << in.rdbuf();
    logs[run] = ss.str();
  }
  if (logs[0].empty()) return std::nullopt;
  return logs[0] == logs[1] ? "identical" : "different";
}

Outcome determinism(const Options& opt) {
  Rng rng(8);
  Graph g = toy::planted_graph(80, 3, 8, rng);
  bool ok = true;
  std::string details;
  for (Variant v : {Variant::Gat, Variant::NoGat, Variant::NoGatRa}) {
    ModelConfig cfg = defaults_for("planted");
    cfg.variant = v;
    cfg.heads = 2;
    cfg.hidden = 4;
    cfg.max_epochs = 30;
    cfg.seed = 17;
    const auto a = train(g, cfg);
    const auto b = train(g, cfg);
    const bool same = epoch_log_jsonl(a) == epoch_log_jsonl(b) && summary_json(a) == summary_json(b);
    ok = ok && same;
    details += std::string(to_string(v)) + (same ? " identical" : " DIFFERENT") + ", ";
  }
  if (opt.cli) {
    const fs::path work = fs::temp_directory_path() / "nogat_acceptance_cli";
    fs::remove_all(work);
    auto r = run_cli_twice(opt, work);
    if (!r) {
      ok = false;
      details += "cli train failed (see " + (work / "cli.txt").string() + ")";
    } else {
      ok = ok && *r == "identical";
      details += "cli train logs " + *r;
    }
  } else {
    details += "cli not exercised";
  }
  return {ok ? Status::Pass : Status::Fail, details};
}

// ---------------------------------------------------------------------------
// Criteria on the published datasets.

struct DataAccess {
  const Options& opt;
  std::optional<Graph> load(const std::string& name, std::string& why) const {
    if (!opt.data_dir) {
      why = "NOGAT_DATA_DIR not set";
      return std::nullopt;
    }
    try {
      return load_dataset(*opt.data_dir, name);
    } catch (const DataError& e) {
      why = e.what();
      return std::nullopt;
    }
  }
};

std::vector<double> seed_runs(const Graph& g, const std::string& dataset, Variant v,
                              const TrainHooks& hooks = {}) {
  std::vector<double> accs;
  for (int seed = 0; seed < kSeeds; ++seed) {
    ModelConfig cfg = defaults_for(dataset);
    cfg.variant = v;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.split_seed = cfg.split == SplitPolicy::Random602020 ? cfg.seed : 0;
    Graph split = make_splits(g, cfg.split, cfg.split_seed);
    accs.push_back(100.0 * train(split, cfg, hooks).test_acc);
  }
  return accs;
}

Outcome coefficient_invariants(const Options& opt) {
  std::string why;
  auto g = DataAccess{opt}.load("cora", why);
  if (!g) return {Status::Skip, why};
  ModelConfig cfg = defaults_for("cora");
  cfg.variant = Variant::NoGat;
  Graph split = make_splits(*g, cfg.split, cfg.split_seed);
  double worst_sum = 0.0, worst_forms = 0.0, min_alpha = 1.0;
  int epochs = 0;
  Rng sampler(99);
  TrainHooks hooks;
  hooks.on_epoch = [&](int, const ForwardResult& fwd, const GraphContext& ctx) {
    ++epochs;
    const auto& pat = ctx.edges.pattern;
    std::vector<Index> rows;
    for (int s = 0; s < 200; ++s) rows.push_back(static_cast<Index>(sampler.below(pat.rows())));
    for (const auto& tr : fwd.layers) {
      const Matrix& alpha = tr.alpha.value();
      const Matrix norm = combine_coefficients_normalized(tr.m.value(), tr.n.value(),
                                                          tr.p_m.value(), tr.q_n.value(), pat);
      for (Index r : rows)
        for (Index k = 0; k < alpha.cols(); ++k) {
          double sum = 0.0;
          for (Index e = pat.row_begin(r); e < pat.row_end(r); ++e) {
            sum += alpha(e, k);
            min_alpha = std::min(min_alpha, alpha(e, k));
            worst_forms = std::max(worst_forms, std::abs(alpha(e, k) - norm(e, k)));
          }
          worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
    }
  };
  train(split, cfg, hooks);
  const bool ok = worst_sum <= 1e-10 && worst_forms <= 1e-12 && min_alpha >= 0.0;
  return {ok ? Status::Pass : Status::Fail,
          std::to_string(epochs) + " epochs, max |row sum - 1| " + sci(worst_sum) +
              " (<= 1e-10), min alpha " + sci(min_alpha) + ", form gap " + sci(worst_forms) +
              " (<= 1e-12)"};
}

Outcome band(const Options& opt, const std::string& dataset, Variant v, double lo, double hi) {
  std::string why;
  auto g = DataAccess{opt}.load(dataset, why);
  if (!g) return {Status::Skip, why};
  const auto t0 = std::chrono::steady_clock::now();
  auto s = stats(seed_runs(*g, dataset, v));
  const bool ok = s.mean >= lo && s.mean <= hi;
  return {ok ? Status::Pass : Status::Fail,
          std::string(to_string(v)) + " on " + dataset + ": mean " + fmt(s.mean) + " +/- " +
              fmt(s.std) + " over 10 seeds, band [" + fmt(lo, 1) + ", " + fmt(hi, 1) + "], " +
              fmt(seconds_since(t0), 0) + " s"};
}

Outcome small_datasets(const Options& opt) {
  const std::vector<std::pair<std::string, double>> targets{
      {"texas", 78.38}, {"cornell", 76.92}, {"wisconsin", 86.27}};
  bool failed = false, skipped = false;
  std::vector<std::string> parts;
  for (const auto& [name, target] : targets) {
    auto r = band(opt, name, Variant::NoGat, target - 5.0, target + 5.0);
    skipped = skipped || r.status == Status::Skip;
    failed = failed || r.status == Status::Fail;
    if (std::find(parts.begin(), parts.end(), r.details) == parts.end()) parts.push_back(r.details);
  }
  std::string details;
  for (const auto& p : parts) details += (details.empty() ? "" : "; ") + p;
  if (failed) return {Status::Fail, details};
  return {skipped ? Status::Skip : Status::Pass, details};
}

Outcome ordering(const Options& opt) {
  bool ok = true;
  std::string details;
  for (const std::string name : {"texas", "wisconsin"}) {
    std::string why;
    auto g = DataAccess{opt}.load(name, why);
    if (!g) return {Status::Skip, why};
    const Stats nogat = stats(seed_runs(*g, name, Variant::NoGat));
    const Stats gat = stats(seed_runs(*g, name, Variant::Gat));
    ok = ok && nogat.mean > gat.mean;
    details += name + ": nogat " + fmt(nogat.mean) + ", gat " + fmt(gat.mean);
    for (Variant v : {Variant::NoGatCn, Variant::NoGatRa, Variant::NoGatJaccard}) {
      const Stats h = stats(seed_runs(*g, name, v));
      const bool upper = nogat.mean > h.mean || nogat.mean + h.std >= h.mean;
      const bool lower = h.mean > gat.mean || h.mean + h.std >= gat.mean;
      ok = ok && upper && lower;
      details += ", " + std::string(to_string(v)) + " " + fmt(h.mean) + "+/-" + fmt(h.std);
    }
    details += "; ";
  }
  return {ok ? Status::Pass : Status::Fail, details};
}

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome(const Options&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  if (const char* env = std::getenv("NOGAT_DATA_DIR"); env && *env) opt.data_dir = fs::path(env);
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      opt.only.insert(std::atoi(argv[++i]));
    } else if (a == "--data-dir" && i + 1 < argc) {
      opt.data_dir = fs::path(argv[++i]);
    } else if (a == "--cli" && i + 1 < argc) {
      opt.cli = fs::path(argv[++i]);
    } else {
      std::cerr << "usage: nogat_acceptance [--only N]... [--data-dir DIR] [--cli PATH]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "heuristic oracle equivalence", heuristic_oracle},
      {3, "structural pipeline oracle", structural_oracle},
      {4, "GAT reduction", gat_reduction},
      {5, "coefficient invariants (cora)", coefficient_invariants},
      {6, "GAT baseline (cora)",
       [](const Options& o) { return band(o, "cora", Variant::Gat, 79.0, 83.0); }},
      {7, "NO-GAT small datasets", small_datasets},
      {8, "NO-GAT (cora)",
       [](const Options& o) { return band(o, "cora", Variant::NoGat, 82.0, 87.0); }},
      {9, "ordering NO-GAT > heuristics > GAT", ordering},
      {10, "determinism", determinism},
  };

  int failed = 0, skipped = 0;
  for (const auto& c : criteria) {
    if (!opt.only.empty() && !opt.only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run(opt);
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failed += o.status == Status::Fail;
    skipped += o.status == Status::Skip;
    std::cout << "[" << tag << "] " << c.id << " " << c.title << ": " << o.details << std::endl;
  }
  if (failed) return 1;
  return skipped ? 77 : 0;
}
