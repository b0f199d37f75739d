#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nogat/attention.hpp"
#include "nogat/graph.hpp"

namespace nogat {

/// Every hyperparameter of a run. Defaults per dataset come from
/// defaults_for(); files and flags override individual keys.
struct ModelConfig {
  std::string dataset = "cora";
  double lambda = 0.01;
  double lr = 0.005;
  Index heads = 8;
  Index hidden = 8;
  Index output_heads = 1;
  int hops = 2;
  double xi = 0.5;
  double dropout = 0.5;
  double eps_init = 0.0;
  Index edge_width = 32;
  Index node_width = 32;
  Index scale_width = 32;
  int max_epochs = 1000;
  int patience = 100;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  SplitPolicy split = SplitPolicy::PlanetoidPublic;
  Variant variant = Variant::NoGat;
  bool normalize_features = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Index max_overlay_nnz = 20'000'000;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  ModelSpec model_spec() const;

  /// Stable key order, values formatted for round-tripping through set().
  std::vector<std::pair<std::string, std::string>> to_key_values() const;

  /// Sets one key from text. Throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
};

/// Published per-dataset settings (lambda, lr, heads, hidden width, dropout)
/// and the split convention for the dataset family. Unknown names get the
/// generic defaults with a random 60/20/20 split.
ModelConfig defaults_for(std::string_view dataset);

bool is_known_dataset(std::string_view dataset);

/// Flat `key = value` text with `#` comments. A `dataset` key, if present,
/// is applied first so its defaults sit underneath the other keys.
ModelConfig load_config_file(const std::filesystem::path& path);

std::string format_config(const ModelConfig& config);

}  // namespace nogat
