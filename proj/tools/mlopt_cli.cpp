// Copyright 2026 The mlopt-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: offline pipeline (explore, prune, train), online
// solve, benchmark tables and artifact inspection.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlopt/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mlopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoCandidate = 2;
constexpr int kExitStage = 3;

struct Flags {
  std::string problem;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<int> k;
  std::optional<double> eps, beta, prune_eps;
  std::optional<int> size;
  std::optional<long> samples;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out;
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

// Config file first, then explicit flags on top.
RunConfig make_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : run_config_from_json(read_json(f.config));
  if (!f.problem.empty() && !fs::exists(f.problem)) c.family = family_from_string(f.problem);
  if (f.seed) c.seed = *f.seed;
  if (f.size) c.size = *f.size;
  if (f.samples) c.max_samples = *f.samples;
  if (f.eps) c.explore_eps = *f.eps;
  if (f.beta) c.explore_beta = *f.beta;
  if (f.prune_eps) c.prune_eps = *f.prune_eps;
  if (!f.k.empty()) c.k_grid = f.k;
  c.threads = f.threads;
  c.validate();
  return c;
}

// --problem names a family to generate, or a problem file whose sampler.json
// sits next to it.
GeneratedProblem resolve_problem(const Flags& f, const RunConfig& c) {
  if (!f.problem.empty() && fs::exists(f.problem)) {
    const fs::path sampler = fs::path(f.problem).parent_path() / "sampler.json";
    if (!fs::exists(sampler)) throw FormatError("missing " + sampler.string());
    return {load_problem(f.problem), sampler_from_json(read_json(sampler))};
  }
  return generate_problem(c);
}

void require_out(const Flags& f) {
  if (f.out.empty()) throw ContractViolation("--out is required");
}

void add_common(CLI::App* cmd, Flags& f, bool grid) {
  cmd->add_option("--problem", f.problem, "family (fuel_cell, portfolio, motion) or problem.json")
      ->envname("MLOPT_PROBLEM");
  cmd->add_option("--config", f.config, "run configuration JSON")->envname("MLOPT_CONFIG");
  cmd->add_option("--seed", f.seed, "run seed")->envname("MLOPT_SEED");
  cmd->add_option("--size", f.size, "T, cardinality or obstacle count")->envname("MLOPT_SIZE");
  cmd->add_option("--samples", f.samples, "exploration sample cap")->envname("MLOPT_SAMPLES");
  cmd->add_option("--eps", f.eps, "Good-Turing tolerance")->envname("MLOPT_EPS");
  cmd->add_option("--beta", f.beta, "Good-Turing confidence")->envname("MLOPT_BETA");
  cmd->add_option("--prune-eps", f.prune_eps, "relative pruning tolerance")
      ->envname("MLOPT_PRUNE_EPS");
  if (grid)
    cmd->add_option("--k", f.k, "candidate counts")->delimiter(',')->envname("MLOPT_K");
  cmd->add_option("--threads", f.threads, "worker threads")->envname("MLOPT_THREADS");
  cmd->add_option("--out", f.out, "output directory")->envname("MLOPT_OUT");
}

void print_exploration(const ExplorationResult& ex) {
  std::cout << "explore: N=" << ex.final_N << " N1=" << ex.final_N1 << " bound=" << ex.final_bound
            << " M=" << ex.bank.size() << " skipped=" << ex.skipped
            << " stop=" << to_string(ex.stop) << "\n";
}

int cmd_generate(const Flags& f) {
  require_out(f);
  RunConfig c = make_config(f);
  GeneratedProblem g = generate_problem(c);
  fs::create_directories(f.out);
  save_problem(g.problem, (fs::path(f.out) / "problem.json").string());
  write_json(fs::path(f.out) / "sampler.json", sampler_to_json(g.sampler));
  std::cout << "generate: " << to_string(c.family) << " n=" << g.problem.n()
            << " m=" << g.problem.m() << " p=" << g.problem.p_dim()
            << " integers=" << g.problem.integer_indices().size() << "\n";
  return kExitOk;
}

int cmd_explore(const Flags& f) {
  require_out(f);
  RunConfig c = make_config(f);
  GeneratedProblem g = resolve_problem(f, c);
  ExploreOptions eo;
  eo.eps = c.explore_eps;
  eo.beta = c.explore_beta;
  eo.max_samples = c.max_samples;
  eo.threads = c.threads;
  ExplorationResult ex;
  try {
    ex = explore(g.problem, training_source(g.sampler), eo);
  } catch (const Error& e) {
    throw StageFailure("explore", e.what());
  }
  const fs::path d(f.out);
  fs::create_directories(d);
  save_problem(g.problem, (d / "problem.json").string());
  write_json(d / "sampler.json", sampler_to_json(g.sampler));
  std::ofstream(d / "bank.json")
      << bank_to_json(ex.bank, ex.samples, ex.trace, g.problem.content_hash()).dump() << "\n";
  print_exploration(ex);
  return kExitOk;
}

// Prunes <out>/bank.json in place of a separate run, writing pruned_bank.json.
int cmd_prune(const Flags& f) {
  require_out(f);
  RunConfig c = make_config(f);
  const fs::path d(f.out);
  ParametricMIQO problem = load_problem((d / "problem.json").string());
  LoadedBank bank = bank_from_json(read_json(d / "bank.json"));
  if (bank.problem_hash != problem.content_hash())
    throw ContractViolation("artifact mismatch: bank was built for another problem");
  PruneOptions po;
  po.eps = c.prune_eps;
  po.max_it = c.prune_max_it;
  po.threads = c.threads;
  FactorCache cache;
  BankPruneResult pr;
  try {
    cache.build(problem, bank.bank.strategies());
    pr = prune(problem, bank.samples, bank.bank, po, cache.enabled() ? &cache : nullptr);
  } catch (const Error& e) {
    throw StageFailure("prune", e.what());
  }
  if (!pr.detail.success) {
    std::ostringstream msg;
    msg << "no feasible pruning at tolerance " << c.prune_eps << " (last alpha "
        << pr.detail.alpha << ")";
    throw StageFailure("prune", msg.str());
  }
  std::ofstream(d / "pruned_bank.json")
      << bank_to_json(pr.bank, pr.samples, {}, problem.content_hash()).dump() << "\n";
  std::cout << "prune: M " << bank.bank.size() << " -> " << pr.bank.size()
            << " alpha=" << pr.detail.alpha << " iterations=" << pr.detail.iterations << "\n";
  return kExitOk;
}

double last(const std::vector<double>& v) { return v.empty() ? 0.0 : v.back(); }

int cmd_train(const Flags& f, int tune_budget) {
  require_out(f);
  RunConfig c = make_config(f);
  if (tune_budget >= 0) c.tune_budget = tune_budget;
  GeneratedProblem g = resolve_problem(f, c);
  OfflineArtifacts a = run_offline(g.problem, g.sampler, c);
  save_artifacts(f.out, g.problem, g.sampler, a);
  print_exploration(a.exploration);
  std::cout << "prune: M " << a.exploration.bank.size() << " -> " << a.pruned.bank.size()
            << " alpha=" << a.pruned.detail.alpha << "\n"
            << "train: loss=" << last(a.report.loss)
            << " train_acc=" << last(a.report.train_accuracy)
            << " val_acc=" << last(a.report.validation_accuracy) << "\n"
            << "cache: " << (a.cache.enabled() ? "factors stored" : "skipped (parametric matrices)")
            << "\nartifacts: " << f.out << "\n";
  return kExitOk;
}

Vector parse_theta(const std::vector<double>& inline_theta, const std::string& file,
                   std::optional<long> sample, const fs::path& dir) {
  if (!inline_theta.empty())
    return Eigen::Map<const Vector>(inline_theta.data(), static_cast<int>(inline_theta.size()));
  if (!file.empty()) {
    json j = read_json(file);
    if (j.is_object()) j = j.at("theta");
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size()));
  }
  if (sample) {
    SamplerSpec spec = sampler_from_json(read_json(dir / "sampler.json"));
    return test_parameters(spec, 1, *sample).front().theta;
  }
  throw ContractViolation("give one of --theta, --theta-file or --sample");
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int cmd_solve(const Flags& f, const std::string& dir, const std::vector<double>& theta_in,
              const std::string& theta_file, std::optional<long> sample) {
  OnlineSolver solver = OnlineSolver::load(dir, f.threads);
  const Vector theta = parse_theta(theta_in, theta_file, sample, dir);
  const int k = f.k.empty() ? 1 : f.k.front();
  OpCounter ops;
  OnlineResult r = solver.solve(theta, k, &ops);
  const CandidateEvaluation& best = r.evaluation.best();
  json out = {{"feasible", best.feasible()},
              {"objective", best.objective},
              {"violation", best.violation},
              {"x", best.x.size() ? vector_json(best.x) : json::array()},
              {"strategy_hash", hex_digest(best.strategy.hash())},
              {"predicted", r.predicted},
              {"k", r.predicted.size()},
              {"predict_time", r.predict_time},
              {"decode_time", r.decode_time},
              {"cached", solver.cached()},
              {"decodes", ops.snapshot().decode_calls},
              {"factorizations", ops.snapshot().factorizations}};
  const std::string text = out.dump(2);
  std::cout << text << "\n";
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    std::ofstream(fs::path(f.out) / "solution.json") << text << "\n";
  }
  if (!best.feasible()) {
    std::cerr << "solve: no feasible candidate among " << r.predicted.size()
              << "; printed the least-violating point\n";
    return kExitNoCandidate;
  }
  return kExitOk;
}

int cmd_benchmark(const Flags& f, const std::vector<int>& sizes, int test_size) {
  require_out(f);
  RunConfig c = make_config(f);
  if (test_size > 0) c.test_size = test_size;
  const std::vector<int> grid = sizes.empty() ? std::vector<int>{c.size} : sizes;
  BenchmarkOutcome b = run_benchmark(c, grid, (fs::path(f.out) / "artifacts").string());
  std::vector<std::string> expected;
  for (int s : grid) expected.push_back(std::to_string(s));
  const std::string family = to_string(c.family);
  for (const auto& w : emit_report(f.out, family, b.rows, expected, c.k_grid))
    std::cerr << "warning: " << w << "\n";
  for (const auto& e : b.failures) std::cerr << "benchmark: " << e << "\n";
  for (const auto& r : b.rows)
    std::cout << family << " size=" << r.size_param << " k=" << r.n_best << " M=" << r.M
              << " accuracy=" << r.summary.accuracy << " avg_subopt=" << r.summary.avg_subopt
              << " avg_infeas=" << r.summary.avg_infeas
              << " median_online=" << r.summary.median_time_pred
              << " median_full=" << r.summary.median_time_full << "\n";
  std::cout << "report: " << (fs::path(f.out) / (family + ".csv")).string() << "\n";
  return b.failures.empty() ? kExitOk : kExitStage;
}

int cmd_inspect(const std::string& dir) {
  const fs::path d(dir);
  const json m = read_json(d / "manifest.json");
  for (const char* key : {"problem_hash", "M_unpruned", "M", "samples", "N1", "good_turing_bound",
                          "stop_reason", "prune_alpha", "cache_enabled", "matrices_parametric"})
    if (m.contains(key)) std::cout << key << ": " << m[key].dump() << "\n";
  if (m.contains("timing"))
    for (const auto& [stage, secs] : m["timing"].items())
      std::cout << "time." << stage << ": " << secs.dump() << "\n";
  OnlineSolver s = OnlineSolver::load(dir);
  const NetworkModel& net = s.model();
  std::cout << "problem: n=" << s.problem().n() << " m=" << s.problem().m()
            << " p=" << s.problem().p_dim() << "\n"
            << "model: layers=" << net.num_layers() << " outputs=" << net.output_size()
            << " macs=" << net.macs_per_forward() << "\n"
            << "hash chain: ok\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned strategies for parametric mixed-integer quadratic problems"};
  app.require_subcommand(1);
  Flags f;

  auto* generate = app.add_subcommand("generate", "write a benchmark problem and its sampler");
  add_common(generate, f, false);

  auto* explore_cmd = app.add_subcommand("explore", "sample strategies until the Good-Turing stop");
  add_common(explore_cmd, f, false);

  auto* prune_cmd = app.add_subcommand("prune", "prune <out>/bank.json into pruned_bank.json");
  add_common(prune_cmd, f, false);

  int tune_budget = -1;
  auto* train_cmd = app.add_subcommand("train", "explore, prune, train and cache");
  add_common(train_cmd, f, false);
  train_cmd->add_option("--tune", tune_budget, "random-search trials (0 = fixed hyperparameters)");

  std::string artifacts = ".";
  std::vector<double> theta;
  std::string theta_file;
  std::optional<long> sample;
  auto* solve_cmd = app.add_subcommand("solve", "predict and decode one parameter vector");
  add_common(solve_cmd, f, true);
  solve_cmd->add_option("--artifacts", artifacts, "artifact directory")
      ->envname("MLOPT_ARTIFACTS");
  solve_cmd->add_option("--theta", theta, "parameter vector")->delimiter(',');
  solve_cmd->add_option("--theta-file", theta_file, "JSON array or {\"theta\": [...]}");
  solve_cmd->add_option("--sample", sample, "index of a held-out sample from sampler.json");

  std::vector<int> sizes;
  int test_size = 0;
  auto* bench_cmd = app.add_subcommand("benchmark", "pipeline and baselines over a size grid");
  add_common(bench_cmd, f, true);
  bench_cmd->add_option("--sizes", sizes, "size grid")->delimiter(',');
  bench_cmd->add_option("--test-size", test_size, "held-out samples per size");

  auto* inspect_cmd = app.add_subcommand("inspect", "summarize and verify an artifact directory");
  inspect_cmd->add_option("dir", artifacts, "artifact directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(f);
    if (*explore_cmd) return cmd_explore(f);
    if (*prune_cmd) return cmd_prune(f);
    if (*train_cmd) return cmd_train(f, tune_budget);
    if (*solve_cmd) return cmd_solve(f, artifacts, theta, theta_file, sample);
    if (*bench_cmd) return cmd_benchmark(f, sizes, test_size);
    if (*inspect_cmd) return cmd_inspect(artifacts);
  } catch (const StageFailure& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
