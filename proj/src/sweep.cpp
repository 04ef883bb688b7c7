// SPDX-License-Identifier: Apache-2.0

#include "thrlab/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "thrlab/errors.hpp"
#include "thrlab/trainer.hpp"

namespace thrlab {

namespace fs = std::filesystem;

namespace {

RunConfig cell_config(const SweepSpec& spec, const std::string& value, uint64_t seed) {
  RunConfig cfg = spec.base;
  cfg.set(spec.axis, value);
  cfg.seed = seed;
  return cfg;
}

fs::path cell_dir(const SweepSpec& spec, const SweepCell& c) {
  return spec.out_dir / (spec.axis + "=" + c.value) / ("seed=" + std::to_string(c.seed));
}

// Final-step rows: the last value of each (key, k) in the stream.
std::vector<MetricRow> final_rows(const MetricLog& log) {
  std::vector<MetricRow> out;
  for (const MetricRow& r : log.rows()) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const MetricRow& o) { return o.key == r.key && o.k == r.k; });
    if (it == out.end())
      out.push_back(r);
    else
      *it = r;
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void write_outputs(const SweepSpec& spec, const SweepResult& res) {
  std::ofstream summary(spec.out_dir / "summary.csv");
  summary << "axis_value,seed,status,key,k,value\n";
  // value -> (key, k) -> finals across seeds
  std::map<std::string, std::map<std::pair<std::string, int>, std::vector<double>>> pooled;
  for (const SweepCell& c : res.cells) {
    if (!c.ok) {
      summary << c.value << ',' << c.seed << ",failed,,,\n";
      continue;
    }
    for (const MetricRow& r : final_rows(c.log)) {
      summary << c.value << ',' << c.seed << ",ok," << r.key << ','
              << (r.k ? std::to_string(*r.k) : "") << ',' << format_double(r.value) << '\n';
      pooled[c.value][{r.key, r.k.value_or(-1)}].push_back(r.value);
    }
  }
  std::ofstream med(spec.out_dir / "summary_median.csv");
  med << "axis_value,key,k,median,n\n";
  for (const std::string& v : spec.values) {
    auto it = pooled.find(v);
    if (it == pooled.end()) continue;
    for (const auto& [key, vals] : it->second)
      med << v << ',' << key.first << ',' << (key.second >= 0 ? std::to_string(key.second) : "")
          << ',' << format_double(median(vals)) << ',' << vals.size() << '\n';
  }
}

}  // namespace

void SweepSpec::validate() const {
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (values.empty()) throw ConfigError("sweep needs at least one axis value");
  const auto keys = RunConfig::keys();
  if (std::find(keys.begin(), keys.end(), axis) == keys.end())
    throw ConfigError("unknown sweep axis '" + axis + "'");
  if (axis == "seed") throw ConfigError("seed is swept through the seed list");
  for (const std::string& v : values) cell_config(*this, v, seeds.front()).validate();
}

double SweepResult::final_metric(const std::string& value, uint64_t seed, const std::string& key,
                                 std::optional<int> k) const {
  for (const SweepCell& c : cells)
    if (c.value == value && c.seed == seed && c.ok)
      if (auto v = c.log.last(key, k)) return *v;
  return std::numeric_limits<double>::quiet_NaN();
}

SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  if (!spec.out_dir.empty()) {
    if (fs::exists(spec.out_dir) && !fs::is_empty(spec.out_dir) && !spec.force)
      throw ConfigError("sweep output " + spec.out_dir.string() +
                        " is not empty; pass --force to overwrite");
    fs::create_directories(spec.out_dir);
  }
  SweepResult res;
  for (const std::string& v : spec.values)
    for (uint64_t s : spec.seeds) res.cells.push_back(SweepCell{v, s, false, {}, {}});

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(res.cells.size()); ++i) {
    SweepCell& c = res.cells[static_cast<std::size_t>(i)];
    try {
      c.log = train(cell_config(spec, c.value, c.seed)).log;
      c.ok = true;
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  }

  if (!spec.out_dir.empty()) {
    for (const SweepCell& c : res.cells) {
      const fs::path dir = cell_dir(spec, c);
      fs::create_directories(dir);
      std::ofstream(dir / "config.txt") << config_text(cell_config(spec, c.value, c.seed));
      if (c.ok) {
        std::ofstream m(dir / "metrics.jsonl");
        c.log.write_jsonl(m);
      } else {
        std::ofstream(dir / "error.txt") << c.error << '\n';
      }
    }
    write_outputs(spec, res);
  }
  return res;
}

}  // namespace thrlab
