// SPDX-License-Identifier: Apache-2.0

#include "thrlab/tasks.hpp"

#include <ostream>
#include <random>
#include <string>

#include <json.hpp>

#include "thrlab/errors.hpp"
#include "thrlab/rng.hpp"

namespace thrlab {

void TaskSpec::validate() const {
  vocab.validate();
  if (modulus < 1) throw ConfigError("task modulus must be positive");
  if (modulus > vocab.size - 1)
    throw ConfigError("task modulus " + std::to_string(modulus) + " exceeds V - 1 = " +
                      std::to_string(vocab.size - 1));
  if (max_len < 2) throw ConfigError("task max_len must be >= 2");
  if (n_questions < 0) throw ConfigError("n_questions must be >= 0");
}

std::vector<Question> generate_dataset(const TaskSpec& spec) {
  spec.validate();
  Rng rng = substream(spec.seed, {tag(Stream::kDataset)});
  std::uniform_int_distribution<int> pick(0, spec.modulus - 1);
  std::vector<Question> qs;
  qs.reserve(static_cast<std::size_t>(spec.n_questions));
  for (int i = 0; i < spec.n_questions; ++i) qs.push_back({i, pick(rng)});
  return qs;
}

int reward(const TaskSpec& spec, const Question& q, std::span<const Token> tokens) {
  if (tokens.empty() || tokens.back() != spec.vocab.eos) return 0;
  if (static_cast<int>(tokens.size()) > spec.max_len) return 0;
  long long sum = 0;
  for (Token t : tokens.first(tokens.size() - 1)) {
    if (t != spec.vocab.eos) sum += t;
  }
  return (sum % spec.modulus) == q.target ? 1 : 0;
}

void dump_dataset(const std::vector<Question>& questions, std::ostream& out) {
  for (const Question& q : questions) {
    nlohmann::ordered_json row;
    row["id"] = q.id;
    row["target"] = q.target;
    out << row.dump() << '\n';
  }
}

}  // namespace thrlab
