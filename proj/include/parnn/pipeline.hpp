#pragma once

#include <stdexcept>
#include <string>

namespace parnn {

/// Malformed configuration (unknown keys, missing files, bad values).
/// The CLI maps this to exit code 2; numerical failures map to 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommandOptions {
    std::string config_path;
    std::string out_dir;  // overrides the config's out_dir when nonempty
    std::string baseline;  // "conformal" adds the split-conformal block to cmd_uq
    bool verbose = false;
};

/// Writes data.csv and manifest.json for the configured generator.
void cmd_simulate(const CommandOptions& opts);

/// Full pipeline on one dataset: anneal, sparsify, refine; writes
/// checkpoint.json, train_log.jsonl, and summary.json.
void cmd_train(const CommandOptions& opts);

/// Replicated selection experiment; writes per-replicate artifacts and a
/// pooled selection_summary.json (FSR/NSR/AR-order/hidden-link/MSPE/MSFE).
void cmd_select_order(const CommandOptions& opts);

/// Prediction intervals from a trained checkpoint; writes intervals.csv and
/// uq_summary.json (plus a conformal block with --baseline conformal).
void cmd_uq(const CommandOptions& opts);

}  // namespace parnn
