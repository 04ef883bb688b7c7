// SPDX-License-Identifier: Apache-2.0
//
// Synthetic verifiable task: a question asks for any eos-terminated token
// sequence whose non-eos ids sum to `target` modulo M. Every question has
// exponentially many correct answers, so there is room for exploration.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "thrlab/policy.hpp"

namespace thrlab {

struct TaskSpec {
  Vocab vocab;
  int modulus = 7;
  int max_len = 5;
  int n_questions = 32;
  uint64_t seed = 0;

  /// Throws ConfigError unless modulus <= V - 1 and max_len >= 2.
  void validate() const;
};

struct Question {
  int id = 0;
  int target = 0;
  bool operator==(const Question&) const = default;
};

std::vector<Question> generate_dataset(const TaskSpec& spec);

/// 1 iff tokens is nonempty, ends in eos, fits in max_len and its non-eos
/// tokens sum to the target mod M.
int reward(const TaskSpec& spec, const Question& q, std::span<const Token> tokens);

/// One JSON object per line: {"id":..,"target":..}.
void dump_dataset(const std::vector<Question>& questions, std::ostream& out);

}  // namespace thrlab
