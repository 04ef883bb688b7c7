// SPDX-License-Identifier: Apache-2.0
//
// In-memory metric log with JSONL and CSV writers. Rows keep insertion
// order; formatting is locale-independent and round-trips doubles.

#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace thrlab {

struct MetricRow {
  int step = 0;
  std::string key;
  double value = 0.0;
  std::optional<int> k;  // set for pass_at_k rows

  bool operator==(const MetricRow&) const = default;
};

class MetricLog {
 public:
  void add(int step, std::string key, double value, std::optional<int> k = std::nullopt);

  const std::vector<MetricRow>& rows() const { return rows_; }

  /// Most recent value for (key, k); nullopt if never logged.
  std::optional<double> last(const std::string& key, std::optional<int> k = std::nullopt) const;

  /// All values for (key, k) in step order.
  std::vector<double> series(const std::string& key, std::optional<int> k = std::nullopt) const;

  /// {"step":..,"key":..,"value":..} per line, plus "k" on pass_at_k rows.
  void write_jsonl(std::ostream& out) const;

  /// step,key,k,value for evaluation rows (greedy_acc, pass_at_k).
  void write_eval_csv(std::ostream& out) const;

 private:
  std::vector<MetricRow> rows_;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

bool is_eval_key(const std::string& key);

}  // namespace thrlab
