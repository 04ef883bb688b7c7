// SPDX-License-Identifier: Apache-2.0
//
// Cartesian sweeps over one config key and a list of seeds.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "thrlab/config.hpp"
#include "thrlab/metrics.hpp"

namespace thrlab {

struct SweepSpec {
  RunConfig base;
  std::string axis;                 // any RunConfig key, typically p or scheme
  std::vector<std::string> values;  // axis values
  std::vector<uint64_t> seeds;
  std::filesystem::path out_dir;    // empty: keep results in memory only
  bool force = false;

  /// Throws ConfigError on an empty seed or value list, an unknown axis, or
  /// any cell config that fails validation.
  void validate() const;
};

struct SweepCell {
  std::string value;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MetricLog log;  // full metric stream of the run
};

struct SweepResult {
  std::vector<SweepCell> cells;  // value-major, seeds in the given order

  /// Final value of (key, k) for one cell; NaN if the cell failed.
  double final_metric(const std::string& value, uint64_t seed, const std::string& key,
                      std::optional<int> k = std::nullopt) const;
};

/// Runs every (value, seed) cell. Cells are independent and run in
/// parallel; a failing cell is recorded and the sweep continues. With an
/// out_dir, each cell gets <out_dir>/<axis>=<value>/seed=<seed>/ holding
/// config.txt and metrics.jsonl, and the directory gets summary.csv
/// (value,seed,status,key,k,value long format) and summary_median.csv.
/// A non-empty existing out_dir is refused (ConfigError) unless force.
SweepResult run_sweep(const SweepSpec& spec);

}  // namespace thrlab
