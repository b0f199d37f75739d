#pragma once

#include <filesystem>
#include <string>

#include "nogat/autodiff.hpp"
#include "nogat/training.hpp"

namespace nogat {

/// One JSON object per epoch, newline separated.
std::string epoch_log_jsonl(const TrainReport& report);

/// Config, best epoch, best validation and test accuracy. No timing data,
/// so identical runs produce identical bytes.
std::string summary_json(const TrainReport& report);

/// Wall-clock only.
std::string timing_json(const TrainReport& report);

/// Writes log.jsonl, summary.json and timing.json into `dir`.
void write_run_outputs(const TrainReport& report, const std::filesystem::path& dir);

/// Versioned binary checkpoint (magic "NOGATPRM", v1): names and values only.
void save_params(const ad::ParamStore& params, const std::filesystem::path& path);
ad::ParamStore load_params(const std::filesystem::path& path);

/// Copies values from `src` into the same-named entries of `dst`. Throws
/// DataError for a missing name and DimensionError for a shape mismatch.
void restore_params(ad::ParamStore& dst, const ad::ParamStore& src);

}  // namespace nogat
