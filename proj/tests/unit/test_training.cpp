#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nogat/config.hpp"
#include "nogat/error.hpp"
#include "nogat/report.hpp"
#include "nogat/training.hpp"
#include "toy.hpp"

using namespace nogat;

namespace {

ModelConfig fast_config(Variant v) {
  ModelConfig c = defaults_for("toy");
  c.variant = v;
  c.heads = 2;
  c.hidden = 4;
  c.edge_width = 4;
  c.node_width = 4;
  c.scale_width = 4;
  c.max_epochs = 40;
  c.patience = 40;
  c.lr = 0.02;
  c.lambda = 5e-4;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("adam: first step moves each entry by lr against the gradient sign") {
  ad::ParamStore p;
  p.add("w", Matrix(1, 3, std::vector<double>{1.0, 1.0, 1.0}));
  p.at("w").grad = Matrix(1, 3, std::vector<double>{0.5, -2.0, 0.0});
  adam_step(p, AdamSettings{0.1, 0.9, 0.999, 1e-8}, 1);
  CHECK(p.at("w").value(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.at("w").value(0, 1) == doctest::Approx(1.1).epsilon(1e-7));
  CHECK(p.at("w").value(0, 2) == 1.0);
}

TEST_CASE("adam: matches a hand-rolled two-step update") {
  ad::ParamStore p;
  p.add("w", Matrix::scalar(0.3));
  const AdamSettings s{0.01, 0.9, 0.999, 1e-8};
  double m = 0, v = 0, w = 0.3;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 0.4 : -0.1;
    p.at("w").grad = Matrix::scalar(g);
    adam_step(p, s, t);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(p.at("w").value(0, 0) == doctest::Approx(w).epsilon(1e-15));
}

TEST_CASE("adam: frozen entries stay put and bad gradients are named") {
  ad::ParamStore p;
  p.add("a", Matrix::scalar(1.0));
  p.add("b", Matrix::scalar(1.0));
  p.at("a").frozen = true;
  p.at("a").grad = Matrix::scalar(1.0);
  p.at("b").grad = Matrix::scalar(1.0);
  adam_step(p, AdamSettings{}, 1);
  CHECK(p.at("a").value(0, 0) == 1.0);
  CHECK(p.at("b").value(0, 0) < 1.0);
  p.at("b").grad = Matrix::scalar(std::nan(""));
  try {
    adam_step(p, AdamSettings{}, 2);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("accuracy breaks ties toward the lowest class") {
  Matrix lp(2, 3, std::vector<double>{0.0, 0.0, -1.0, -1.0, -2.0, -1.0});
  std::vector<int> labels{0, 2};
  std::vector<Index> rows{0, 1};
  CHECK(accuracy(lp, labels, rows) == 0.5);
  std::vector<Index> none;
  CHECK_THROWS_AS(accuracy(lp, labels, none), DataError);
}

TEST_CASE("loss adds the weight penalty over every parameter") {
  ad::ParamStore p;
  p.add("w", Matrix(1, 2, std::vector<double>{1.0, 2.0}));
  ad::Tape t;
  auto lp = t.constant(Matrix(1, 2, std::vector<double>{std::log(0.25), std::log(0.75)}));
  std::vector<int> labels{1};
  std::vector<Index> rows{0};
  auto l = loss(t, lp, labels, rows, p, 0.1);
  CHECK(l.item() == doctest::Approx(-std::log(0.75) + 0.1 * 5.0).epsilon(1e-15));
}

TEST_CASE("training learns a planted partition") {
  Rng rng(8);
  Graph g = toy::planted_graph(90, 3, 6, rng);
  for (Variant v : {Variant::Gat, Variant::NoGat}) {
    CAPTURE(to_string(v));
    auto report = train(g, fast_config(v));
    CHECK(report.epochs.size() >= 1);
    CHECK(report.best_epoch >= 1);
    CHECK(report.epochs.front().train_loss > report.epochs.back().train_loss);
    CHECK(report.test_acc > 0.6);
  }
}

TEST_CASE("training is bitwise reproducible and seed-sensitive") {
  Rng rng(8);
  Graph g = toy::planted_graph(60, 3, 6, rng);
  auto cfg = fast_config(Variant::NoGat);
  cfg.max_epochs = 15;
  auto a = train(g, cfg);
  auto b = train(g, cfg);
  CHECK(epoch_log_jsonl(a) == epoch_log_jsonl(b));
  CHECK(summary_json(a) == summary_json(b));
  cfg.seed = 1;
  auto c = train(g, cfg);
  CHECK(epoch_log_jsonl(a) != epoch_log_jsonl(c));
}

TEST_CASE("early stopping: patience, resets and first-maximum best epoch") {
  EarlyStopping es(3);
  CHECK_FALSE(es.update(1, 0.5, 1.0));
  CHECK_FALSE(es.update(2, 0.5, 1.1));
  CHECK_FALSE(es.update(3, 0.5, 0.9));  // loss improved, counter resets
  CHECK_FALSE(es.update(4, 0.6, 2.0));  // accuracy improved
  CHECK_FALSE(es.update(5, 0.6, 2.0));
  CHECK_FALSE(es.update(6, 0.6, 2.0));
  CHECK(es.update(7, 0.6, 2.0));
  CHECK(es.best_epoch() == 4);
  CHECK(es.best_accuracy() == 0.6);
}

TEST_CASE("training stops early once nothing improves") {
  Rng rng(8);
  Graph g = toy::planted_graph(60, 3, 6, rng);
  auto cfg = fast_config(Variant::Gat);
  cfg.lr = 0.5;
  cfg.lambda = 0.0;
  cfg.dropout = 0.0;
  cfg.max_epochs = 400;
  cfg.patience = 10;
  auto r = train(g, cfg);
  CHECK(r.epochs.size() < 400);
  CHECK(r.best_epoch <= static_cast<int>(r.epochs.size()));
  double best = 0.0;
  for (const auto& e : r.epochs) best = std::max(best, e.val_acc);
  CHECK(r.best_val_acc == best);
  CHECK(r.epochs[static_cast<std::size_t>(r.best_epoch - 1)].val_acc == best);
}

TEST_CASE("best parameters are restored for evaluation") {
  Rng rng(8);
  Graph g = toy::planted_graph(60, 3, 6, rng);
  auto cfg = fast_config(Variant::NoGatCn);
  cfg.max_epochs = 20;
  ad::ParamStore best;
  TrainHooks hooks;
  hooks.best_params = &best;
  auto r = train(g, cfg, hooks);
  CHECK(best.size() > 0);
  CHECK(evaluate(g, best, cfg, g.test_mask) == r.test_acc);
}

TEST_CASE("training rejects graphs without masks") {
  Rng rng(1);
  Graph g = toy::random_graph(10, 3, 2, 0.3, rng);
  g.val_mask.assign(10, 0);
  CHECK_THROWS_AS(train(g, fast_config(Variant::Gat)), DataError);
}

TEST_CASE("divergent training names the epoch") {
  Rng rng(8);
  Graph g = toy::planted_graph(30, 3, 6, rng);
  auto cfg = fast_config(Variant::Gat);
  cfg.lr = 1e200;
  cfg.max_epochs = 30;
  try {
    train(g, cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("config: dataset defaults") {
  auto cora = defaults_for("cora");
  CHECK(cora.lambda == 0.01);
  CHECK(cora.heads == 4);
  CHECK(cora.split == SplitPolicy::PlanetoidPublic);
  auto texas = defaults_for("texas");
  CHECK(texas.hidden == 16);
  CHECK(texas.lambda == 0.001);
  CHECK(texas.split == SplitPolicy::Random602020);
  CHECK(defaults_for("squirrel").lambda == 0.1);
  CHECK(defaults_for("actor").hidden == 128);
  CHECK(is_known_dataset("citeseer"));
  CHECK_FALSE(is_known_dataset("pubmed"));
}

TEST_CASE("config: validation names the field") {
  ModelConfig c;
  c.lr = 0;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lr") != std::string::npos);
  }
  c = ModelConfig{};
  c.xi = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(c.set("bogus", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("heads", "four"), ConfigError);
}

TEST_CASE("config: file round trip") {
  auto dir = std::filesystem::temp_directory_path() / "nogat_test_config";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run.cfg");
    out << "# comment\nlr = 0.01\ndataset = texas  # trailing\nvariant = nogat-ra\n";
  }
  auto c = load_config_file(dir / "run.cfg");
  CHECK(c.dataset == "texas");
  CHECK(c.hidden == 16);
  CHECK(c.lr == 0.01);
  CHECK(c.variant == Variant::NoGatRa);
  {
    std::ofstream out(dir / "again.cfg");
    out << format_config(c);
  }
  auto d = load_config_file(dir / "again.cfg");
  CHECK(format_config(d) == format_config(c));
}

TEST_CASE("report: outputs and checkpoints") {
  Rng rng(8);
  Graph g = toy::planted_graph(45, 3, 6, rng);
  auto cfg = fast_config(Variant::NoGat);
  cfg.max_epochs = 5;
  ad::ParamStore best;
  TrainHooks hooks;
  hooks.best_params = &best;
  auto r = train(g, cfg, hooks);
  auto dir = std::filesystem::temp_directory_path() / "nogat_test_report";
  std::filesystem::remove_all(dir);
  write_run_outputs(r, dir);
  CHECK(slurp(dir / "log.jsonl") == epoch_log_jsonl(r));
  CHECK(slurp(dir / "summary.json").find("\"test_acc\"") != std::string::npos);
  CHECK(slurp(dir / "summary.json").find("wall") == std::string::npos);
  CHECK(slurp(dir / "timing.json").find("wall_seconds") != std::string::npos);

  save_params(best, dir / "params.bin");
  auto loaded = load_params(dir / "params.bin");
  REQUIRE(loaded.size() == best.size());
  for (std::size_t i = 0; i < best.size(); ++i) {
    CHECK(loaded[i].name == best[i].name);
    CHECK(loaded[i].value == best[i].value);
  }
  ad::ParamStore fresh;
  build_model(g, cfg, fresh);
  restore_params(fresh, loaded);
  CHECK(evaluate(g, fresh, cfg, g.test_mask) == r.test_acc);

  ad::ParamStore wrong;
  wrong.add("layer0.weight", Matrix(1, 1));
  CHECK_THROWS_AS(restore_params(fresh, wrong), DimensionError);
  CHECK_THROWS_AS(restore_params(fresh, ad::ParamStore{}), DataError);
  std::ofstream(dir / "junk.bin") << "garbage";
  CHECK_THROWS_AS(load_params(dir / "junk.bin"), DataError);
}
