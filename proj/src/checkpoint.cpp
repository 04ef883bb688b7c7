// SPDX-License-Identifier: Apache-2.0
//
// Text checkpoint container, version 1:
//
//   thrlab-checkpoint 1
//   vocab <V> <eos>
//   dim <d>
//   seed <seed>
//   init_scale <hexfloat>
//   readout
//   <V lines of d hexfloats>
//   features <n>
//   <question_id> <prefix_len> <prefix tokens...> <d hexfloats>   (n lines)

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "thrlab/errors.hpp"
#include "thrlab/policy.hpp"

namespace thrlab {
namespace {

constexpr int kCheckpointVersion = 1;

std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_hexfloat(const std::string& s) {
  std::size_t used = 0;
  double x = std::stod(s, &used);
  if (used != s.size()) throw LabError("bad float in checkpoint: " + s);
  return x;
}

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word)
    throw LabError("checkpoint: expected '" + word + "', got '" + got + "'");
}

}  // namespace

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw LabError("cannot open checkpoint for writing: " + path.string());
  out << "thrlab-checkpoint " << kCheckpointVersion << '\n';
  out << "vocab " << params.vocab().size << ' ' << params.vocab().eos << '\n';
  out << "dim " << params.dim() << '\n';
  out << "seed " << params.seed() << '\n';
  out << "init_scale " << hexfloat(params.init_scale()) << '\n';
  out << "readout\n";
  const Matrix& w = params.readout();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) out << (c ? " " : "") << hexfloat(w(r, c));
    out << '\n';
  }
  out << "features " << params.features().size() << '\n';
  for (const auto& [ctx, h] : params.features()) {
    out << ctx.question_id << ' ' << ctx.prefix.size();
    for (Token t : ctx.prefix) out << ' ' << t;
    for (double x : h) out << ' ' << hexfloat(x);
    out << '\n';
  }
  if (!out) throw LabError("failed writing checkpoint: " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LabError("cannot open checkpoint: " + path.string());
  expect(in, "thrlab-checkpoint");
  int version = 0;
  in >> version;
  if (version != kCheckpointVersion)
    throw LabError("unsupported checkpoint version " + std::to_string(version));
  Vocab vocab;
  int dim = 0;
  uint64_t seed = 0;
  std::string tok;
  expect(in, "vocab");
  in >> vocab.size >> vocab.eos;
  expect(in, "dim");
  in >> dim;
  expect(in, "seed");
  in >> seed;
  expect(in, "init_scale");
  in >> tok;
  PolicyParams params(vocab, dim, parse_hexfloat(tok), seed);
  expect(in, "readout");
  for (double& x : params.readout().data()) {
    in >> tok;
    x = parse_hexfloat(tok);
  }
  expect(in, "features");
  std::size_t n = 0;
  in >> n;
  for (std::size_t i = 0; i < n; ++i) {
    ContextKey ctx;
    std::size_t len = 0;
    in >> ctx.question_id >> len;
    ctx.prefix.resize(len);
    for (Token& t : ctx.prefix) in >> t;
    Vec h(static_cast<std::size_t>(dim));
    for (double& x : h) {
      in >> tok;
      x = parse_hexfloat(tok);
    }
    params.features().emplace(std::move(ctx), std::move(h));
  }
  if (!in) throw LabError("truncated checkpoint: " + path.string());
  return params;
}

}  // namespace thrlab
