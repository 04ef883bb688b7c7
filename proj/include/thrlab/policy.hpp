// SPDX-License-Identifier: Apache-2.0
//
// Unconstrained-features softmax policy.
//
// The logits for a context are W * h_ctx, where W (V x d) is a shared readout
// matrix and h_ctx is a free feature vector owned by that context. Features
// are created lazily: the first time a context is seen its vector is drawn
// from a Gaussian seeded by (seed, context), so the parameter state is a pure
// function of the seed and the sequence of updates.

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "thrlab/numeric.hpp"

namespace thrlab {

using Token = int;
using TokenSeq = std::vector<Token>;

struct Vocab {
  int size = 12;
  Token eos = 11;

  /// Throws ConfigError unless size >= 2 and 0 <= eos < size.
  void validate() const;
  bool operator==(const Vocab&) const = default;
};

struct ContextKey {
  int question_id = 0;
  TokenSeq prefix;

  auto operator<=>(const ContextKey&) const = default;
  bool operator==(const ContextKey&) const = default;
};

struct TokenDist {
  Vec probs;
  double entropy = 0.0;  // nats
};

class PolicyParams {
 public:
  PolicyParams() = default;

  /// Readout drawn as N(0, 1/d) from the seed; no features allocated yet.
  PolicyParams(Vocab vocab, int dim, double init_scale, uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  int vocab_size() const { return vocab_.size; }
  int dim() const { return dim_; }
  double init_scale() const { return init_scale_; }
  uint64_t seed() const { return seed_; }

  Matrix& readout() { return readout_; }
  const Matrix& readout() const { return readout_; }

  bool has_feature(const ContextKey& ctx) const { return features_.contains(ctx); }

  /// Stored feature, or the deterministic initial value if the context has
  /// not been allocated yet. Never mutates, so it is safe to call from many
  /// threads at once.
  Vec feature(const ContextKey& ctx) const;

  /// Allocates the context if needed and returns its stored feature.
  Vec& feature_mut(const ContextKey& ctx);

  /// Initial feature for a context as a pure function of (seed, ctx).
  Vec initial_feature(const ContextKey& ctx) const;

  const std::map<ContextKey, Vec>& features() const { return features_; }
  std::map<ContextKey, Vec>& features() { return features_; }

  /// Deep copy used for the old-policy and reference-policy roles.
  PolicyParams snapshot() const { return *this; }

  bool operator==(const PolicyParams&) const = default;

 private:
  Vocab vocab_;
  int dim_ = 0;
  double init_scale_ = 0.5;
  uint64_t seed_ = 0;
  Matrix readout_;
  std::map<ContextKey, Vec> features_;
};

/// W * h_ctx without allocating.
Vec logits(const PolicyParams& params, const ContextKey& ctx);

/// W * h_ctx, allocating and storing h_ctx on first use.
Vec logits(PolicyParams& params, const ContextKey& ctx);

/// log softmax(logits / temperature), max-subtracted.
/// Throws NonFiniteLogit on a non-finite logit, std::invalid_argument on a
/// non-positive temperature.
Vec log_softmax(std::span<const double> logits, double temperature);

TokenDist softmax_dist(std::span<const double> logits, double temperature);

double entropy_of(std::span<const double> probs);

TokenDist dist(const PolicyParams& params, const ContextKey& ctx, double temperature = 1.0);

/// sum_k log pi(tokens[k] | question, tokens[<k]).
double logprob_sequence(const PolicyParams& params, int question_id,
                        std::span<const Token> tokens, double temperature = 1.0);

struct LogprobGrad {
  Matrix dW;
  Vec dh;
};

/// Analytic partials of log pi(token | ctx):
///   d/dW = (e_token - pi) h^T / T,  d/dh = W^T (e_token - pi) / T.
LogprobGrad grad_logprob(const PolicyParams& params, const ContextKey& ctx, Token token,
                         double temperature = 1.0);

/// Gradient accumulator over W and the touched features.
struct ParamGrad {
  Matrix dW;
  std::map<ContextKey, Vec> dH;

  ParamGrad() = default;
  ParamGrad(int vocab_size, int dim) : dW(vocab_size, dim) {}

  /// this += scale * other. Merge order is the caller's responsibility.
  void add(const ParamGrad& other, double scale = 1.0);

  /// Adds scale * dl/dtheta for a context whose logit gradient is g_logits
  /// (already divided by temperature): dW += scale g h^T, dh += scale W^T g.
  void add_logit_grad(const PolicyParams& params, const ContextKey& ctx,
                      std::span<const double> feature, std::span<const double> g_logits,
                      double scale);

  double norm() const;
};

/// W <- W - lr dW and h <- h - lr dh for every touched context.
void sgd_step(PolicyParams& params, const ParamGrad& grad, double lr);

/// Versioned text checkpoint; floats are written as hexfloats so a
/// save/load round trip is bit-exact.
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace thrlab
