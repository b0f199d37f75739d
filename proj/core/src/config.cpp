#include "nogat/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "nogat/error.hpp"

namespace nogat {

namespace {

struct DatasetRow {
  std::string_view name;
  double lambda;
  double lr;
  Index heads;
  Index hidden;
  double dropout;
  SplitPolicy split;
};

constexpr std::array<DatasetRow, 7> kDatasets{{
    {"cora", 0.01, 0.005, 4, 8, 0.5, SplitPolicy::PlanetoidPublic},
    {"citeseer", 0.01, 0.005, 8, 8, 0.5, SplitPolicy::PlanetoidPublic},
    {"texas", 0.001, 0.005, 4, 16, 0.5, SplitPolicy::Random602020},
    {"cornell", 0.001, 0.005, 8, 8, 0.5, SplitPolicy::Random602020},
    {"wisconsin", 0.001, 0.005, 4, 8, 0.5, SplitPolicy::Random602020},
    {"squirrel", 0.1, 0.005, 8, 128, 0.5, SplitPolicy::Random602020},
    {"actor", 0.001, 0.005, 8, 128, 0.5, SplitPolicy::Random602020},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_as(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
}

std::string fmt_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid " + field + ": " + why);
  };
  if (!(lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (heads < 1) fail("heads", "must be >= 1");
  if (hidden < 1) fail("hidden", "must be >= 1");
  if (output_heads < 1) fail("output_heads", "must be >= 1");
  if (hops < 1) fail("hops", "must be >= 1");
  if (!(xi > 0.0 && xi <= 1.0)) fail("xi", "must lie in (0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0, 1)");
  if (edge_width < 1 || node_width < 1) fail("edge_width/node_width", "must be >= 1");
  if (scale_width < 0) fail("scale_width", "must be >= 0");
  if (max_epochs < 1) fail("max_epochs", "must be >= 1");
  if (patience < 1) fail("patience", "must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be > 0");
  if (max_overlay_nnz < 1) fail("max_overlay_nnz", "must be >= 1");
}

ModelSpec ModelConfig::model_spec() const {
  ModelSpec s;
  s.variant = variant;
  s.heads = heads;
  s.hidden = hidden;
  s.output_heads = output_heads;
  s.dropout = dropout;
  s.eps_init = eps_init;
  s.structure.edge_width = edge_width;
  s.structure.node_width = node_width;
  s.structure.scale_width = scale_width;
  s.structure.hops = hops;
  s.structure.xi = xi;
  s.structure.max_overlay_nnz = max_overlay_nnz;
  return s;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_key_values() const {
  return {
      {"dataset", dataset},
      {"variant", std::string(to_string(variant))},
      {"split", std::string(to_string(split))},
      {"split_seed", std::to_string(split_seed)},
      {"seed", std::to_string(seed)},
      {"lambda", fmt_double(lambda)},
      {"lr", fmt_double(lr)},
      {"heads", std::to_string(heads)},
      {"hidden", std::to_string(hidden)},
      {"output_heads", std::to_string(output_heads)},
      {"hops", std::to_string(hops)},
      {"xi", fmt_double(xi)},
      {"dropout", fmt_double(dropout)},
      {"eps_init", fmt_double(eps_init)},
      {"edge_width", std::to_string(edge_width)},
      {"node_width", std::to_string(node_width)},
      {"scale_width", std::to_string(scale_width)},
      {"max_epochs", std::to_string(max_epochs)},
      {"patience", std::to_string(patience)},
      {"normalize_features", normalize_features ? "true" : "false"},
      {"beta1", fmt_double(beta1)},
      {"beta2", fmt_double(beta2)},
      {"adam_eps", fmt_double(adam_eps)},
      {"max_overlay_nnz", std::to_string(max_overlay_nnz)},
  };
}

void ModelConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "dataset") dataset = std::string(v);
  else if (key == "variant") variant = parse_variant(v);
  else if (key == "split") split = parse_split_policy(v);
  else if (key == "split_seed") split_seed = parse_as<std::uint64_t>(key, v);
  else if (key == "seed") seed = parse_as<std::uint64_t>(key, v);
  else if (key == "lambda") lambda = parse_as<double>(key, v);
  else if (key == "lr") lr = parse_as<double>(key, v);
  else if (key == "heads") heads = parse_as<Index>(key, v);
  else if (key == "hidden") hidden = parse_as<Index>(key, v);
  else if (key == "output_heads") output_heads = parse_as<Index>(key, v);
  else if (key == "hops") hops = parse_as<int>(key, v);
  else if (key == "xi") xi = parse_as<double>(key, v);
  else if (key == "dropout") dropout = parse_as<double>(key, v);
  else if (key == "eps_init") eps_init = parse_as<double>(key, v);
  else if (key == "edge_width") edge_width = parse_as<Index>(key, v);
  else if (key == "node_width") node_width = parse_as<Index>(key, v);
  else if (key == "scale_width") scale_width = parse_as<Index>(key, v);
  else if (key == "max_epochs") max_epochs = parse_as<int>(key, v);
  else if (key == "patience") patience = parse_as<int>(key, v);
  else if (key == "normalize_features") normalize_features = parse_bool(key, v);
  else if (key == "beta1") beta1 = parse_as<double>(key, v);
  else if (key == "beta2") beta2 = parse_as<double>(key, v);
  else if (key == "adam_eps") adam_eps = parse_as<double>(key, v);
  else if (key == "max_overlay_nnz") max_overlay_nnz = parse_as<Index>(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

bool is_known_dataset(std::string_view dataset) {
  return std::any_of(kDatasets.begin(), kDatasets.end(),
                     [&](const DatasetRow& r) { return r.name == dataset; });
}

ModelConfig defaults_for(std::string_view dataset) {
  ModelConfig c;
  c.dataset = std::string(dataset);
  c.split = SplitPolicy::Random602020;
  for (const auto& row : kDatasets) {
    if (row.name != dataset) continue;
    c.lambda = row.lambda;
    c.lr = row.lr;
    c.heads = row.heads;
    c.hidden = row.hidden;
    c.dropout = row.dropout;
    c.split = row.split;
  }
  return c;
}

ModelConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = line;
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = trim(sv);
    if (sv.empty()) continue;
    auto eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    entries.emplace_back(std::string(trim(sv.substr(0, eq))), std::string(trim(sv.substr(eq + 1))));
  }
  ModelConfig c;
  for (const auto& [k, v] : entries)
    if (k == "dataset") c = defaults_for(v);
  for (const auto& [k, v] : entries)
    if (k != "dataset") c.set(k, v);
  return c;
}

std::string format_config(const ModelConfig& config) {
  std::ostringstream out;
  for (const auto& [k, v] : config.to_key_values()) out << k << " = " << v << "\n";
  return out.str();
}

}  // namespace nogat
