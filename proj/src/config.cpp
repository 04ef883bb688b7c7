// SPDX-License-Identifier: Apache-2.0

#include "thrlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "thrlab/errors.hpp"

namespace thrlab {

namespace {

constexpr std::pair<Scheme, std::string_view> kSchemeNames[] = {
    {Scheme::kGrpo, "grpo"},
    {Scheme::kThrOnly, "thr_only"},
    {Scheme::kThrP, "thr_p"},
    {Scheme::kPassK, "passk"},
    {Scheme::kPassKMixed, "passk_mixed"},
    {Scheme::kStaticMixed, "static_mixed"},
    {Scheme::kPosOnly, "pos_only"},
    {Scheme::kNegOnly, "neg_only"},
    {Scheme::kCovKl, "covkl"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || ptr != end)
    throw ConfigError("bad value for '" + std::string(key) + "': '" + v + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out))
      throw ConfigError("non-finite value for '" + std::string(key) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for '" + std::string(key) + "': '" + v + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view text) {
  std::vector<int> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) out.push_back(parse_number<int>(key, item));
  if (out.empty()) throw ConfigError("empty list for '" + std::string(key) + "'");
  return out;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(name)                                                              \
  Field{#name, [](RunConfig& c, std::string_view v) { c.name = parse_number<int>(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define U64_FIELD(name)                                                                   \
  Field{#name,                                                                            \
        [](RunConfig& c, std::string_view v) { c.name = parse_number<uint64_t>(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define DBL_FIELD(name)                                                                 \
  Field{#name,                                                                          \
        [](RunConfig& c, std::string_view v) { c.name = parse_number<double>(#name, v); }, \
        [](const RunConfig& c) { return fmt(c.name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      INT_FIELD(vocab_size),
      INT_FIELD(eos),
      INT_FIELD(modulus),
      INT_FIELD(max_len),
      INT_FIELD(n_questions),
      U64_FIELD(task_seed),
      INT_FIELD(dim),
      DBL_FIELD(init_scale),
      INT_FIELD(steps),
      INT_FIELD(groups_per_batch),
      INT_FIELD(updates_per_batch),
      INT_FIELD(group_size),
      DBL_FIELD(lr),
      DBL_FIELD(temperature),
      DBL_FIELD(epsilon),
      DBL_FIELD(kl_coef),
      INT_FIELD(max_attempts),
      Field{"scheme", [](RunConfig& c, std::string_view v) { c.scheme = parse_scheme(trim(v)); },
            [](const RunConfig& c) { return std::string(to_string(c.scheme)); }},
      DBL_FIELD(p),
      INT_FIELD(passk_k),
      DBL_FIELD(chi),
      DBL_FIELD(covkl_top_frac),
      Field{"tau_mode",
            [](RunConfig& c, std::string_view v) {
              const std::string s = trim(v);
              if (s == "eq8_mean")
                c.tau_mode = TauMode::kEq8Mean;
              else if (s == "abs_mean_fallback")
                c.tau_mode = TauMode::kAbsMean;
              else
                throw ConfigError("unknown tau_mode '" + s + "' (eq8_mean|abs_mean_fallback)");
            },
            [](const RunConfig& c) {
              return std::string(c.tau_mode == TauMode::kEq8Mean ? "eq8_mean" : "abs_mean_fallback");
            }},
      Field{"entropy_aug",
            [](RunConfig& c, std::string_view v) { c.entropy_aug = parse_bool("entropy_aug", v); },
            [](const RunConfig& c) { return std::string(c.entropy_aug ? "true" : "false"); }},
      DBL_FIELD(entropy_top_frac),
      Field{"objective",
            [](RunConfig& c, std::string_view v) { c.objective = parse_objective(trim(v)); },
            [](const RunConfig& c) { return std::string(to_string(c.objective)); }},
      INT_FIELD(eval_every),
      INT_FIELD(eval_samples),
      Field{"eval_k",
            [](RunConfig& c, std::string_view v) { c.eval_k = parse_int_list("eval_k", v); },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.eval_k.size(); ++i)
                s += (i ? "," : "") + std::to_string(c.eval_k[i]);
              return s;
            }},
      U64_FIELD(seed),
  };
  return f;
}

#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::string_view to_string(Scheme s) {
  for (auto [v, name] : kSchemeNames)
    if (v == s) return name;
  return "unknown";
}

std::string_view to_string(Objective o) {
  return o == Objective::kGrpo ? "grpo" : "gspo_token";
}

Scheme parse_scheme(std::string_view name) {
  for (auto [v, n] : kSchemeNames)
    if (n == name) return v;
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

Objective parse_objective(std::string_view name) {
  if (name == "grpo") return Objective::kGrpo;
  if (name == "gspo_token") return Objective::kGspoToken;
  throw ConfigError("unknown objective '" + std::string(name) + "' (grpo|gspo_token)");
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_pairs() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(std::string(f.key), f.get(*this));
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

Vocab RunConfig::vocab() const {
  Vocab v;
  v.size = vocab_size;
  v.eos = eos < 0 ? vocab_size - 1 : eos;
  return v;
}

TaskSpec RunConfig::task() const {
  TaskSpec t;
  t.vocab = vocab();
  t.modulus = modulus;
  t.max_len = max_len;
  t.n_questions = n_questions;
  t.seed = task_seed;
  return t;
}

ClipConfig RunConfig::clip() const { return ClipConfig{epsilon, kl_coef}; }

ThrConfig RunConfig::thr() const {
  ThrConfig c;
  c.p = scheme == Scheme::kThrOnly ? 0.0 : p;
  c.entropy_aug = entropy_aug;
  c.entropy_top_frac = entropy_top_frac;
  c.tau_mode = tau_mode;
  return c;
}

PasskConfig RunConfig::passk() const { return PasskConfig{passk_k, chi}; }

void RunConfig::validate() const {
  task().validate();
  require(dim >= 1, "dim must be >= 1");
  require(init_scale >= 0.0, "init_scale must be >= 0");
  require(steps >= 0, "steps must be >= 0");
  require(groups_per_batch >= 1, "groups_per_batch must be >= 1");
  require(updates_per_batch >= 1, "updates_per_batch must be >= 1");
  require(group_size >= 2 && group_size <= 64, "group_size must be in [2, 64]");
  require(lr >= 0.0, "lr must be >= 0");
  require(temperature > 0.0, "temperature must be > 0");
  clip().validate();
  require(max_attempts >= 0, "max_attempts must be >= 0");
  thr().validate();
  require(passk_k >= 1, "passk_k must be >= 1");
  if (scheme == Scheme::kPassK || scheme == Scheme::kPassKMixed ||
      scheme == Scheme::kStaticMixed)
    require(passk_k <= group_size, "passk_k must not exceed group_size");
  require(chi >= 0.0 && chi <= 1.0, "chi must be in [0, 1]");
  require(covkl_top_frac > 0.0 && covkl_top_frac <= 1.0, "covkl_top_frac must be in (0, 1]");
  require(!(scheme == Scheme::kCovKl && objective == Objective::kGspoToken),
          "scheme covkl runs on the grpo objective only");
  require(eval_every >= 0, "eval_every must be >= 0");
  require(eval_samples >= 1, "eval_samples must be >= 1");
  for (int k : eval_k)
    require(k >= 1 && k <= eval_samples, "eval_k entries must be in [1, eval_samples]");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      cfg.set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.to_pairs()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace thrlab
