// SPDX-License-Identifier: Apache-2.0

#include "thrlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "thrlab/errors.hpp"
#include "thrlab/rng.hpp"

namespace thrlab {

void Vocab::validate() const {
  if (size < 2) throw ConfigError("vocab size must be >= 2, got " + std::to_string(size));
  if (eos < 0 || eos >= size)
    throw ConfigError("eos id " + std::to_string(eos) + " outside vocab of size " +
                      std::to_string(size));
}

PolicyParams::PolicyParams(Vocab vocab, int dim, double init_scale, uint64_t seed)
    : vocab_(vocab), dim_(dim), init_scale_(init_scale), seed_(seed),
      readout_(static_cast<std::size_t>(vocab.size), static_cast<std::size_t>(dim)) {
  vocab_.validate();
  if (dim < 1) throw ConfigError("feature dimension must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("feature init scale must be >= 0");
  Rng rng = substream(seed, {tag(Stream::kReadoutInit)});
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (double& w : readout_.data()) w = normal(rng);
}

Vec PolicyParams::initial_feature(const ContextKey& ctx) const {
  uint64_t h = mix_keys(seed_, {tag(Stream::kFeatureInit),
                                static_cast<uint64_t>(static_cast<int64_t>(ctx.question_id)),
                                static_cast<uint64_t>(ctx.prefix.size())});
  for (Token t : ctx.prefix) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<int64_t>(t)));
  Rng rng(h);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec f(static_cast<std::size_t>(dim_));
  for (double& x : f) x = init_scale_ * normal(rng);
  return f;
}

Vec PolicyParams::feature(const ContextKey& ctx) const {
  auto it = features_.find(ctx);
  if (it != features_.end()) return it->second;
  return initial_feature(ctx);
}

Vec& PolicyParams::feature_mut(const ContextKey& ctx) {
  auto it = features_.find(ctx);
  if (it == features_.end()) it = features_.emplace(ctx, initial_feature(ctx)).first;
  return it->second;
}

Vec logits(const PolicyParams& params, const ContextKey& ctx) {
  return matvec(params.readout(), params.feature(ctx));
}

Vec logits(PolicyParams& params, const ContextKey& ctx) {
  const Vec& h = params.feature_mut(ctx);
  return matvec(params.readout(), h);
}

Vec log_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) {
    if (!std::isfinite(l)) throw NonFiniteLogit("non-finite logit encountered");
    mx = std::max(mx, l / temperature);
  }
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    out[v] = logits[v] / temperature - mx;
    sum += std::exp(out[v]);
  }
  const double lse = std::log(sum);
  for (double& x : out) x -= lse;
  return out;
}

double entropy_of(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

TokenDist softmax_dist(std::span<const double> logits, double temperature) {
  Vec lp = log_softmax(logits, temperature);
  TokenDist d;
  d.probs.resize(lp.size());
  double h = 0.0;
  for (std::size_t v = 0; v < lp.size(); ++v) {
    d.probs[v] = std::exp(lp[v]);
    h -= d.probs[v] * lp[v];
  }
  d.entropy = std::max(h, 0.0);
  return d;
}

TokenDist dist(const PolicyParams& params, const ContextKey& ctx, double temperature) {
  return softmax_dist(logits(params, ctx), temperature);
}

double logprob_sequence(const PolicyParams& params, int question_id,
                        std::span<const Token> tokens, double temperature) {
  if (tokens.empty()) throw std::invalid_argument("logprob_sequence needs a nonempty sequence");
  ContextKey ctx{question_id, {}};
  double total = 0.0;
  for (Token t : tokens) {
    Vec lp = log_softmax(logits(params, ctx), temperature);
    total += lp.at(static_cast<std::size_t>(t));
    ctx.prefix.push_back(t);
  }
  return total;
}

LogprobGrad grad_logprob(const PolicyParams& params, const ContextKey& ctx, Token token,
                         double temperature) {
  const Vec h = params.feature(ctx);
  const Matrix& w = params.readout();
  TokenDist d = softmax_dist(matvec(w, h), temperature);
  Vec err(d.probs.size());
  for (std::size_t v = 0; v < err.size(); ++v)
    err[v] = ((static_cast<Token>(v) == token) ? 1.0 : 0.0) - d.probs[v];
  for (double& e : err) e /= temperature;
  LogprobGrad g;
  g.dW = Matrix(w.rows(), w.cols());
  add_outer(g.dW, 1.0, err, h);
  g.dh = matvec_t(w, err);
  return g;
}

void ParamGrad::add(const ParamGrad& other, double scale) {
  if (dW.rows() == 0) dW = Matrix(other.dW.rows(), other.dW.cols());
  axpy(scale, other.dW.data(), dW.data());
  for (const auto& [ctx, g] : other.dH) {
    auto [it, inserted] = dH.try_emplace(ctx, g.size(), 0.0);
    axpy(scale, g, it->second);
  }
}

void ParamGrad::add_logit_grad(const PolicyParams& params, const ContextKey& ctx,
                               std::span<const double> feature,
                               std::span<const double> g_logits, double scale) {
  add_outer(dW, scale, g_logits, feature);
  Vec gh = matvec_t(params.readout(), g_logits);
  auto [it, inserted] = dH.try_emplace(ctx, gh.size(), 0.0);
  axpy(scale, gh, it->second);
}

double ParamGrad::norm() const {
  double s = dot(dW.data(), dW.data());
  for (const auto& [ctx, g] : dH) s += dot(g, g);
  return std::sqrt(s);
}

void sgd_step(PolicyParams& params, const ParamGrad& grad, double lr) {
  if (lr == 0.0) return;
  axpy(-lr, grad.dW.data(), params.readout().data());
  for (const auto& [ctx, g] : grad.dH) {
    if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) continue;
    Vec& h = params.feature_mut(ctx);
    axpy(-lr, g, h);
  }
}

}  // namespace thrlab
