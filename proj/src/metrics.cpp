// SPDX-License-Identifier: Apache-2.0

#include "thrlab/metrics.hpp"

#include <charconv>
#include <cmath>
#include <json.hpp>

namespace thrlab {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

bool is_eval_key(const std::string& key) { return key == "greedy_acc" || key == "pass_at_k"; }

void MetricLog::add(int step, std::string key, double value, std::optional<int> k) {
  rows_.push_back(MetricRow{step, std::move(key), value, k});
}

std::optional<double> MetricLog::last(const std::string& key, std::optional<int> k) const {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it)
    if (it->key == key && it->k == k) return it->value;
  return std::nullopt;
}

std::vector<double> MetricLog::series(const std::string& key, std::optional<int> k) const {
  std::vector<double> out;
  for (const MetricRow& r : rows_)
    if (r.key == key && r.k == k) out.push_back(r.value);
  return out;
}

void MetricLog::write_jsonl(std::ostream& out) const {
  for (const MetricRow& r : rows_) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["key"] = r.key;
    if (r.k) j["k"] = *r.k;
    if (std::isfinite(r.value))
      j["value"] = r.value;
    else
      j["value"] = format_double(r.value);
    out << j.dump() << '\n';
  }
}

void MetricLog::write_eval_csv(std::ostream& out) const {
  out << "step,key,k,value\n";
  for (const MetricRow& r : rows_) {
    if (!is_eval_key(r.key)) continue;
    out << r.step << ',' << r.key << ',' << (r.k ? std::to_string(*r.k) : "") << ','
        << format_double(r.value) << '\n';
  }
}

}  // namespace thrlab
