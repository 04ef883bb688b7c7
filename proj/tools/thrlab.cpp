// SPDX-License-Identifier: Apache-2.0
//
// thrlab: train | verify | sweep | eval
//
// Exit codes: 0 success, 2 invalid configuration or usage, 3 verifier
// failure, 4 batch starvation, 1 any other error.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "thrlab/config.hpp"
#include "thrlab/errors.hpp"
#include "thrlab/sweep.hpp"
#include "thrlab/trainer.hpp"
#include "thrlab/verify.hpp"

namespace fs = std::filesystem;
using namespace thrlab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;
constexpr int kExitStarved = 4;

fs::path output_root() {
  const char* env = std::getenv("THRLAB_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

// --config FILE plus one --<key> flag per RunConfig field.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "flat key = value config file");
    for (const std::string& key : RunConfig::keys())
      app->add_option("--" + key, overrides[key], "RunConfig field " + key);
  }

  RunConfig build(CLI::App* app) const {
    RunConfig cfg;
    if (!file.empty()) apply_config_file(cfg, file);
    for (const auto& [key, value] : overrides)
      if (app->count("--" + key)) cfg.set(key, value);
    cfg.validate();
    return cfg;
  }
};

std::vector<uint64_t> parse_seeds(const std::string& text) {
  std::vector<uint64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      if (auto dots = item.find(".."); dots != std::string::npos) {
        const uint64_t a = std::stoull(item.substr(0, dots));
        const uint64_t b = std::stoull(item.substr(dots + 2));
        if (b < a) throw ConfigError("bad seed range '" + item + "'");
        for (uint64_t s = a; s <= b; ++s) out.push_back(s);
      } else {
        out.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw LabError("cannot write " + p.string());
  out << text;
}

int cmd_train(const RunConfig& cfg, fs::path out, bool dump_rollouts) {
  if (out.empty())
    out = output_root() / ("train-" + std::string(to_string(cfg.scheme)) + "-seed" +
                           std::to_string(cfg.seed));
  fs::create_directories(out);
  write_file(out / "config.txt", config_text(cfg));
  {
    std::ofstream ds(out / "dataset.jsonl");
    dump_dataset(generate_dataset(cfg.task()), ds);
  }
  std::ofstream rollouts;
  TrainOptions opts;
  if (dump_rollouts) {
    rollouts.open(out / "rollouts.jsonl");
    opts.rollouts = &rollouts;
  }
  const TrainResult res = train(cfg, opts);
  {
    std::ofstream m(out / "metrics.jsonl");
    res.log.write_jsonl(m);
    std::ofstream e(out / "eval.csv");
    res.log.write_eval_csv(e);
  }
  save_checkpoint(res.params, out / "checkpoint.txt");
  std::cout << "greedy_acc " << format_double(res.final_eval.greedy_acc);
  for (const auto& [k, v] : res.final_eval.pass_at_k)
    std::cout << "  pass@" << k << ' ' << format_double(v);
  std::cout << "\nwrote " << out.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, int step) {
  const PolicyParams params = load_checkpoint(checkpoint);
  if (!(params.vocab() == cfg.vocab()) || params.dim() != cfg.dim)
    throw ConfigError("checkpoint shape does not match the config (vocab/dim)");
  MetricLog log;
  log_eval(log, step, evaluate(cfg, params, step));
  log.write_eval_csv(std::cout);
  return 0;
}

int cmd_verify(const std::string& suite, int n, uint64_t seed, const fs::path& out) {
  const VerifyReport rep = run_verify(suite, n, seed);
  if (out.empty()) {
    write_verify_csv(rep, std::cout);
  } else {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream f(out);
    write_verify_csv(rep, f);
  }
  std::size_t failed = 0;
  std::map<std::string, double> worst;
  for (const VerifyRow& r : rep.rows) {
    failed += r.pass ? 0 : 1;
    worst[r.check] = std::max(worst[r.check], r.error);
  }
  for (const auto& [check, e] : worst)
    std::cerr << suite << ": " << check << " max error " << format_double(e) << '\n';
  std::cerr << suite << ": " << rep.rows.size() - failed << "/" << rep.rows.size()
            << " rows within tolerance\n";
  return failed ? kExitVerify : 0;
}

int cmd_sweep(SweepSpec spec) {
  const SweepResult res = run_sweep(spec);
  std::size_t failed = 0;
  for (const SweepCell& c : res.cells) {
    if (c.ok) continue;
    ++failed;
    std::cerr << "cell " << spec.axis << "=" << c.value << " seed=" << c.seed
              << " failed: " << c.error << '\n';
  }
  std::cout << res.cells.size() - failed << "/" << res.cells.size() << " cells completed; wrote "
            << spec.out_dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token hidden reward lab: training, verifiers and sweeps"};
  app.require_subcommand(1);

  ConfigFlags train_flags, sweep_flags, eval_flags;

  auto* train_cmd = app.add_subcommand("train", "train one run and write its metrics");
  train_flags.attach(train_cmd);
  std::string train_out;
  bool dump = false;
  train_cmd->add_option("--out", train_out, "output directory (default $THRLAB_OUT/train-...)");
  train_cmd->add_flag("--dump-rollouts", dump, "write every sampled batch to rollouts.jsonl");

  auto* verify_cmd = app.add_subcommand("verify", "run a verifier suite, CSV report");
  std::string suite;
  int n = 100;
  uint64_t vseed = 0;
  std::string verify_out;
  verify_cmd->add_option("suite", suite, "theorem1|entropy|cross_entropy|qalign|gradcheck|passk_oracle")
      ->required();
  verify_cmd->add_option("-n,--n", n, "number of instances (trials for qalign)");
  verify_cmd->add_option("--seed", vseed, "base seed");
  verify_cmd->add_option("--out", verify_out, "CSV path (default stdout)");

  auto* sweep_cmd = app.add_subcommand("sweep", "run an axis x seed matrix");
  sweep_flags.attach(sweep_cmd);
  std::string axis = "p", values, seeds, sweep_out;
  bool force = false;
  sweep_cmd->add_option("--axis", axis, "config key to sweep (p, scheme, ...)");
  sweep_cmd->add_option("--values", values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--seeds", seeds, "comma list or a..b range")->required();
  sweep_cmd->add_option("--out", sweep_out, "output directory (default $THRLAB_OUT/sweep-<axis>)");
  sweep_cmd->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_flags.attach(eval_cmd);
  std::string checkpoint;
  int eval_step = 0;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--step", eval_step, "step label for the emitted rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags.build(train_cmd), train_out, dump);
    if (*eval_cmd) return cmd_eval(eval_flags.build(eval_cmd), checkpoint, eval_step);
    if (*verify_cmd) return cmd_verify(suite, n, vseed, verify_out);
    if (*sweep_cmd) {
      SweepSpec spec;
      spec.base = sweep_flags.build(sweep_cmd);
      spec.axis = axis;
      spec.values = split(values);
      spec.seeds = parse_seeds(seeds);
      spec.out_dir = sweep_out.empty() ? output_root() / ("sweep-" + axis) : fs::path(sweep_out);
      spec.force = force;
      return cmd_sweep(spec);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BatchStarvation& e) {
    std::cerr << "batch starvation at step " << e.step() << ": " << e.what() << '\n';
    return kExitStarved;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
