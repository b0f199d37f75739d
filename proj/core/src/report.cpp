#include "nogat/report.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "nogat/error.hpp"

namespace nogat {

namespace {

using nlohmann::ordered_json;

constexpr char kMagic[8] = {'N', 'O', 'G', 'A', 'T', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

std::string epoch_log_jsonl(const TrainReport& report) {
  std::string out;
  for (const auto& e : report.epochs) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["train_acc"] = e.train_acc;
    j["val_loss"] = e.val_loss;
    j["val_acc"] = e.val_acc;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string summary_json(const TrainReport& report) {
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : report.config.to_key_values()) cfg[k] = v;
  ordered_json j;
  j["config"] = cfg;
  j["epochs_run"] = report.epochs.size();
  j["best_epoch"] = report.best_epoch;
  j["best_val_acc"] = report.best_val_acc;
  j["test_acc"] = report.test_acc;
  return j.dump(2) + "\n";
}

std::string timing_json(const TrainReport& report) {
  ordered_json j;
  j["wall_seconds"] = report.wall_seconds;
  return j.dump(2) + "\n";
}

void write_run_outputs(const TrainReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "log.jsonl", epoch_log_jsonl(report));
  write_text(dir / "summary.json", summary_json(report));
  write_text(dir / "timing.json", timing_json(report));
}

void save_params(const ad::ParamStore& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, params.size());
  for (const auto& e : params) {
    put<std::uint64_t>(out, e.name.size());
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::int64_t>(out, e.value.rows());
    put<std::int64_t>(out, e.value.cols());
    out.write(reinterpret_cast<const char*>(e.value.data().data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

ad::ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path.string() + ": not a parameter checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in, path);
  ad::ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint64_t>(in, path);
    if (len > 4096) throw DataError(path.string() + ": corrupt parameter name");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    const auto rows = get<std::int64_t>(in, path);
    const auto cols = get<std::int64_t>(in, path);
    if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 32))
      throw DataError(path.string() + ": corrupt shape for " + name);
    std::vector<double> data(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw DataError(path.string() + ": truncated checkpoint");
    store.add(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  return store;
}

void restore_params(ad::ParamStore& dst, const ad::ParamStore& src) {
  for (auto& e : dst) {
    if (!src.contains(e.name)) throw DataError("checkpoint lacks parameter " + e.name);
    const auto& s = src.at(e.name);
    if (!s.value.same_shape(e.value))
      throw DimensionError("parameter " + e.name + ": checkpoint shape " + s.value.shape_string() +
                           ", model shape " + e.value.shape_string());
    e.value = s.value;
  }
}

}  // namespace nogat
