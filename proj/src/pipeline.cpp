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

#include "mlopt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mlopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Sub-seeds of the run seed, one per consumer.
enum SeedSlot : std::uint64_t {
  kSamplerSeed = 1,
  kTrainSeed = 2,
  kTuneSeed = 3,
  kObstacleSeed = 4,
  kLoadSeed = 5,
  kMarketSeed = 6,
  kTestSeed = 0x7e57,
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

json parse_file(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw ContractViolation(std::string(what) + " must be positive");
  };
  positive(explore_eps, "explore eps");
  positive(explore_beta, "explore beta");
  if (!(explore_beta < 1.0)) throw ContractViolation("explore beta must be below 1");
  positive(prune_eps, "prune eps");
  if (size < (family == Family::Motion ? 0 : 1)) throw ContractViolation("size out of range");
  if (max_samples < 1 || test_size < 1 || prune_max_it < 1 || base_steps < 1 ||
      timing_repeats < 1 || threads < 1 || tune_budget < 0)
    throw ContractViolation("run config counts must be positive");
  if (k_grid.empty()) throw ContractViolation("k grid is empty");
  for (int k : k_grid)
    if (k < 1) throw ContractViolation("k must be at least 1");
}

json to_json(const RunConfig& c) {
  return {{"family", to_string(c.family)},
          {"size", c.size},
          {"fuel", to_json(c.fuel)},
          {"portfolio", to_json(c.portfolio)},
          {"motion", to_json(c.motion)},
          {"base_steps", c.base_steps},
          {"radius", c.radius},
          {"explore_eps", c.explore_eps},
          {"explore_beta", c.explore_beta},
          {"max_samples", c.max_samples},
          {"prune_eps", c.prune_eps},
          {"prune_max_it", c.prune_max_it},
          {"hyperparams", to_json(c.hyper)},
          {"tune_budget", c.tune_budget},
          {"k_grid", c.k_grid},
          {"test_size", c.test_size},
          {"heuristic_node_limit", c.heuristic_node_limit},
          {"timing_repeats", c.timing_repeats},
          {"seed", c.seed},
          {"threads", c.threads}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("family")) c.family = family_from_string(j["family"].get<std::string>());
    c.size = j.value("size", c.size);
    if (j.contains("fuel")) from_json(j["fuel"], c.fuel);
    if (j.contains("portfolio")) from_json(j["portfolio"], c.portfolio);
    if (j.contains("motion")) from_json(j["motion"], c.motion);
    c.base_steps = j.value("base_steps", c.base_steps);
    c.radius = j.value("radius", c.radius);
    c.explore_eps = j.value("explore_eps", c.explore_eps);
    c.explore_beta = j.value("explore_beta", c.explore_beta);
    c.max_samples = j.value("max_samples", c.max_samples);
    c.prune_eps = j.value("prune_eps", c.prune_eps);
    c.prune_max_it = j.value("prune_max_it", c.prune_max_it);
    if (j.contains("hyperparams")) from_json(j["hyperparams"], c.hyper);
    c.tune_budget = j.value("tune_budget", c.tune_budget);
    c.k_grid = j.value("k_grid", c.k_grid);
    c.test_size = j.value("test_size", c.test_size);
    c.heuristic_node_limit = j.value("heuristic_node_limit", c.heuristic_node_limit);
    c.timing_repeats = j.value("timing_repeats", c.timing_repeats);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw FormatError(std::string("run config: ") + e.what());
  }
  return c;
}

GeneratedProblem generate_problem(const RunConfig& cfg) {
  cfg.validate();
  SamplerSpec spec;
  spec.family = cfg.family;
  spec.seed = derive_seed(cfg.seed, kSamplerSeed);
  switch (cfg.family) {
    case Family::FuelCell: {
      FuelCellConfig fc = cfg.fuel;
      fc.T = cfg.size;
      ParametricMIQO pr = build_fuel_cell(fc);
      auto solve = [&](const Vector& th) {
        MIQOResult r = solve_miqo(pr.instantiate(th), pr.integer_indices());
        return r.status == MIQOStatus::Optimal ? r.x : Vector();
      };
      spec.fuel = fc;
      spec.radius = cfg.radius >= 0 ? cfg.radius : 0.5;
      spec.base_points = fuel_cell_rollout(fc, cfg.base_steps, derive_seed(cfg.seed, kLoadSeed), solve);
      return {std::move(pr), spec};
    }
    case Family::Portfolio: {
      PortfolioConfig pc = cfg.portfolio;
      pc.cardinality = cfg.size;
      pc.seed = derive_seed(cfg.seed, kMarketSeed);
      spec.portfolio = pc;
      spec.radius = cfg.radius >= 0 ? cfg.radius : 1e-3;
      spec.base_points = portfolio_trajectory(pc, cfg.base_steps);
      return {build_portfolio(pc), spec};
    }
    case Family::Motion: {
      MotionConfig mc = cfg.motion;
      mc.obstacles = random_obstacles(mc, cfg.size, derive_seed(cfg.seed, kObstacleSeed));
      spec.box_lower = Eigen::Map<const Vector>(mc.p_min.data(), mc.dim);
      spec.box_upper = Eigen::Map<const Vector>(mc.p_max.data(), mc.dim);
      return {build_motion(mc), spec};
    }
  }
  throw ContractViolation("unknown family");
}

std::uint64_t bank_hash(const StrategyBank& bank) {
  Fnv1a h;
  for (const auto& s : bank.strategies()) h.add(s.hash());
  return h.digest();
}

ParameterSource training_source(const SamplerSpec& spec) {
  return [spec](long i) {
    ParameterInstance p = sample_parameters(spec, 1, {}, i).front();
    p.id = "train-" + std::to_string(i);
    return p;
  };
}

std::vector<ParameterInstance> test_parameters(const SamplerSpec& spec, int count, long first) {
  SamplerSpec test = spec;
  test.seed = derive_seed(spec.seed, kTestSeed);
  auto out = sample_parameters(test, count, {}, first);
  for (int i = 0; i < count; ++i) out[i].id = "test-" + std::to_string(first + i);
  return out;
}

TrainedModel train_stage(const ParametricMIQO& problem, const BankPruneResult& pruned,
                         const RunConfig& cfg) {
  TrainedModel out;
  Dataset data;
  data.num_classes = pruned.bank.size();
  for (const auto& s : pruned.samples) {
    data.inputs.push_back(s.param.theta);
    data.targets.push_back(s.label);
  }
  Hyperparams h = cfg.hyper;
  h.seed = derive_seed(cfg.seed, kTrainSeed);
  try {
    if (cfg.tune_budget > 0) {
      out.tuning = tune(data, cfg.tune_budget, derive_seed(cfg.seed, kTuneSeed));
      h = out.tuning->best;
    }
    TrainResult tr = train(data, h);
    out.model = std::move(tr.model);
    out.report = std::move(tr.report);
  } catch (const Error& e) {
    throw StageFailure("train", e.what());
  }
  NetworkModel& m = out.model;
  m.labels.resize(m.output_size());
  m.label_hashes.resize(m.output_size());
  for (int i = 0; i < m.output_size(); ++i) {
    m.labels[i] = i;
    m.label_hashes[i] = pruned.bank.at(i).hash();
  }
  m.metadata["problem_hash"] = hex_digest(problem.content_hash());
  m.metadata["bank_hash"] = hex_digest(bank_hash(pruned.bank));
  m.metadata["hyperparams"] = to_json(h);
  return out;
}

OfflineArtifacts run_offline(const ParametricMIQO& problem, const SamplerSpec& sampler,
                             const RunConfig& cfg) {
  cfg.validate();
  OfflineArtifacts a;
  json timing;
  auto t0 = std::chrono::steady_clock::now();
  try {
    ExploreOptions eo;
    eo.eps = cfg.explore_eps;
    eo.beta = cfg.explore_beta;
    eo.max_samples = cfg.max_samples;
    eo.threads = cfg.threads;
    a.exploration = explore(problem, training_source(sampler), eo);
  } catch (const Error& e) {
    throw StageFailure("explore", e.what());
  }
  timing["explore"] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  try {
    FactorCache unpruned;
    unpruned.build(problem, a.exploration.bank.strategies());
    PruneOptions po;
    po.eps = cfg.prune_eps;
    po.max_it = cfg.prune_max_it;
    po.threads = cfg.threads;
    a.pruned = prune(problem, a.exploration.samples, a.exploration.bank, po,
                     unpruned.enabled() ? &unpruned : nullptr);
  } catch (const Error& e) {
    throw StageFailure("prune", e.what());
  }
  if (!a.pruned.detail.success) {
    std::ostringstream msg;
    msg << "no feasible pruning at tolerance " << cfg.prune_eps << " (last alpha "
        << a.pruned.detail.alpha << ")";
    throw StageFailure("prune", msg.str());
  }
  timing["prune"] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  TrainedModel tm = train_stage(problem, a.pruned, cfg);
  a.model = std::move(tm.model);
  a.report = std::move(tm.report);
  a.tuning = std::move(tm.tuning);
  timing["train"] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  try {
    a.cache.build(problem, a.pruned.bank.strategies());
  } catch (const Error& e) {
    throw StageFailure("cache", e.what());
  }
  timing["cache"] = seconds_since(t0);

  const auto& ex = a.exploration;
  a.manifest = {{"format", "mlopt-artifacts-v1"},
                {"problem_hash", hex_digest(problem.content_hash())},
                {"bank_hash", hex_digest(bank_hash(ex.bank))},
                {"pruned_bank_hash", hex_digest(bank_hash(a.pruned.bank))},
                {"model_hash", hex_digest(a.model.content_hash())},
                {"cache_enabled", a.cache.enabled()},
                {"matrices_parametric", problem.matrices_parametric()},
                {"M_unpruned", ex.bank.size()},
                {"M", a.pruned.bank.size()},
                {"samples", ex.final_N},
                {"skipped", ex.skipped},
                {"N1", ex.final_N1},
                {"good_turing_bound", ex.final_bound},
                {"stop_reason", to_string(ex.stop)},
                {"prune_alpha", a.pruned.detail.alpha},
                {"prune_iterations", a.pruned.detail.iterations},
                {"config", to_json(cfg)},
                {"timing", timing}};
  return a;
}

void save_artifacts(const std::string& dir, const ParametricMIQO& problem,
                    const SamplerSpec& sampler, const OfflineArtifacts& a) {
  const fs::path d(dir);
  fs::create_directories(d);
  save_problem(problem, (d / "problem.json").string());
  write_text(d / "sampler.json", sampler_to_json(sampler).dump(2) + "\n");
  const auto& ex = a.exploration;
  write_text(d / "bank.json",
             bank_to_json(ex.bank, ex.samples, ex.trace, problem.content_hash()).dump() + "\n");
  write_text(d / "pruned_bank.json",
             bank_to_json(a.pruned.bank, a.pruned.samples, {}, problem.content_hash()).dump() + "\n");
  save_model(a.model, (d / "model.bin").string(), (d / "model.json").string(),
             (d / "labels.json").string());
  if (a.cache.enabled()) a.cache.save((d / "cache.bin").string());
  else fs::remove(d / "cache.bin");
  json report = a.report.to_json();
  if (a.tuning) {
    json trials = json::array();
    for (const auto& t : a.tuning->trials)
      trials.push_back({{"hyperparams", to_json(t.hyper)},
                        {"validation_accuracy", t.validation_accuracy},
                        {"pruned", t.pruned},
                        {"epochs_run", t.epochs_run}});
    report["tuning"] = trials;
  }
  write_text(d / "train_report.json", report.dump(2) + "\n");

  json manifest = a.manifest;
  json files;
  for (const char* f : {"problem.json", "sampler.json", "bank.json", "pruned_bank.json", "model.bin",
                        "model.json", "labels.json", "cache.bin", "train_report.json"})
    if (fs::exists(d / f)) files[f] = hex_digest(hash_bytes(read_text(d / f)));
  manifest["files"] = files;
  write_text(d / "manifest.json", manifest.dump(2) + "\n");
}

OnlineSolver::OnlineSolver(ParametricMIQO problem, StrategyBank bank, NetworkModel model,
                           std::optional<FactorCache> cache, int threads)
    : problem_(std::move(problem)),
      bank_(std::move(bank)),
      model_(std::move(model)),
      cache_(std::move(cache)),
      threads_(std::max(1, threads)) {
  model_.validate();
  if (model_.input_size() != problem_.p_dim())
    throw ContractViolation("artifact mismatch: model input size differs from the parameter size");
  for (int i = 0; i < model_.output_size(); ++i) {
    const int label = model_.labels[i];
    if (label < 0 || label >= bank_.size())
      throw ContractViolation("artifact mismatch: model label outside the bank");
    if (model_.label_hashes[i] != 0 && model_.label_hashes[i] != bank_.at(label).hash())
      throw ContractViolation("artifact mismatch: label map does not match the bank");
  }
  if (cache_ && cache_->enabled()) {
    if (cache_->problem_hash() != problem_.content_hash())
      throw ContractViolation("artifact mismatch: cache belongs to another problem");
    for (const auto& s : bank_.strategies())
      if (!cache_->find(s.hash()))
        throw ContractViolation("artifact mismatch: cache lacks a bank strategy");
  }
}

OnlineSolver OnlineSolver::load(const std::string& dir, int threads) {
  const fs::path d(dir);
  ParametricMIQO problem = load_problem((d / "problem.json").string());
  const std::string ph = hex_digest(problem.content_hash());
  json manifest = parse_file(d / "manifest.json");
  if (manifest.value("problem_hash", "") != ph)
    throw ContractViolation("artifact mismatch: manifest was written for another problem");
  LoadedBank bank = bank_from_json(parse_file(d / "pruned_bank.json"));
  if (bank.problem_hash != problem.content_hash())
    throw ContractViolation("artifact mismatch: bank was built for another problem");
  NetworkModel model = load_model((d / "model.bin").string(), (d / "model.json").string(),
                                  (d / "labels.json").string());
  if (model.metadata.value("problem_hash", "") != ph)
    throw ContractViolation("artifact mismatch: model was trained for another problem");
  if (model.metadata.value("bank_hash", "") != hex_digest(bank_hash(bank.bank)))
    throw ContractViolation("artifact mismatch: model was trained on another bank");
  std::optional<FactorCache> cache;
  if (manifest.value("cache_enabled", false)) {
    cache = FactorCache::load((d / "cache.bin").string(), problem);
    if (!cache) throw ContractViolation("artifact mismatch: cache belongs to another problem");
  }
  return OnlineSolver(std::move(problem), std::move(bank.bank), std::move(model), std::move(cache),
                      threads);
}

OnlineResult OnlineSolver::solve(const Vector& theta, int k, OpCounter* counter) const {
  if (theta.size() != problem_.p_dim()) throw DimensionError("solve: parameter size mismatch");
  k = std::clamp(k, 1, model_.output_size());
  OnlineResult out;
  const auto t0 = std::chrono::steady_clock::now();
  out.predicted = predict_topk(model_, theta, k, counter);
  const auto t1 = std::chrono::steady_clock::now();
  std::vector<Strategy> candidates;
  candidates.reserve(out.predicted.size());
  for (int label : out.predicted) candidates.push_back(bank_.at(label));
  const InstanceData inst = problem_.instantiate(theta);
  out.evaluation = evaluate_candidates(inst, candidates, problem_.integer_indices(),
                                       cached() ? &*cache_ : nullptr, counter, threads_);
  const auto t2 = std::chrono::steady_clock::now();
  out.predict_time = std::chrono::duration<double>(t1 - t0).count();
  out.decode_time = std::chrono::duration<double>(t2 - t1).count();
  return out;
}

std::vector<TestPoint> solve_test_points(const ParametricMIQO& problem,
                                         const std::vector<ParameterInstance>& params,
                                         long heuristic_node_limit) {
  std::vector<TestPoint> out;
  MIQOOptions heur;
  heur.node_limit = heuristic_node_limit;
  heur.return_incumbent_on_limit = true;
  for (const auto& p : params) {
    const InstanceData inst = problem.instantiate(p);
    TestPoint tp;
    tp.param = p;
    auto t0 = std::chrono::steady_clock::now();
    MIQOResult full;
    try {
      full = solve_miqo(inst, problem.integer_indices());
    } catch (const OracleExhausted&) {
      continue;
    }
    tp.oracle_time = seconds_since(t0);
    if (full.status != MIQOStatus::Optimal) continue;
    tp.f_star = full.objective;
    t0 = std::chrono::steady_clock::now();
    MIQOResult h = solve_miqo(inst, problem.integer_indices(), heur);
    tp.heuristic_time = seconds_since(t0);
    tp.heuristic_found = h.x.size() > 0;
    tp.heuristic_objective = h.objective;
    out.push_back(std::move(tp));
  }
  return out;
}

std::vector<std::vector<EvalRecord>> evaluate_online(const OnlineSolver& solver,
                                                     const std::vector<TestPoint>& points,
                                                     const EvaluationOptions& opts) {
  std::vector<std::vector<EvalRecord>> out;
  for (int k : opts.k_grid) {
    std::vector<EvalRecord> recs;
    recs.reserve(points.size());
    for (const auto& tp : points) {
      std::vector<double> tp_pred, tp_dec;
      OnlineResult res;
      for (int r = 0; r < std::max(1, opts.timing_repeats); ++r) {
        res = solver.solve(tp.param.theta, k);
        tp_pred.push_back(res.predict_time);
        tp_dec.push_back(res.decode_time);
      }
      const auto& best = res.evaluation.best();
      EvalRecord rec;
      rec.id = tp.param.id;
      rec.k = k;
      rec.predict_time = median(tp_pred);
      rec.decode_time = median(tp_dec);
      rec.oracle_time = tp.oracle_time;
      rec.heuristic_time = tp.heuristic_time;
      rec.f_star = tp.f_star;
      rec.objective = best.objective;
      rec.infeasibility = best.violation;
      recs.push_back(std::move(rec));
    }
    out.push_back(std::move(recs));
  }
  return out;
}

std::vector<TableRow> table_rows(const std::string& size_param, const ParametricMIQO& problem,
                                 int M_unpruned, int M,
                                 const std::vector<std::vector<EvalRecord>>& records,
                                 std::span<const int> k_grid) {
  if (records.size() != k_grid.size()) throw DimensionError("table_rows: one record set per k");
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    TableRow r;
    r.size_param = size_param;
    r.n_var = problem.n();
    r.n_constr = problem.m();
    r.M_unpruned = M_unpruned;
    r.M = M;
    r.n_best = k_grid[i];
    r.summary = summarize(records[i]);
    rows.push_back(std::move(r));
  }
  return rows;
}

BenchmarkOutcome run_benchmark(const RunConfig& base, std::span<const int> sizes,
                               const std::string& artifact_root) {
  BenchmarkOutcome out;
  for (int size : sizes) {
    RunConfig cfg = base;
    cfg.size = size;
    try {
      GeneratedProblem g = [&] {
        try {
          return generate_problem(cfg);
        } catch (const StageFailure&) {
          throw;
        } catch (const Error& e) {
          throw StageFailure("generate", e.what());
        }
      }();
      OfflineArtifacts a = run_offline(g.problem, g.sampler, cfg);
      if (!artifact_root.empty())
        save_artifacts((fs::path(artifact_root) / std::to_string(size)).string(), g.problem,
                       g.sampler, a);
      const int M_unpruned = a.exploration.bank.size();
      const int M = a.pruned.bank.size();
      std::optional<FactorCache> cache;
      if (a.cache.enabled()) cache = std::move(a.cache);
      OnlineSolver solver(g.problem, std::move(a.pruned.bank), std::move(a.model),
                          std::move(cache), cfg.threads);
      std::vector<TestPoint> points;
      try {
        points = solve_test_points(g.problem, test_parameters(g.sampler, cfg.test_size),
                                   cfg.heuristic_node_limit);
      } catch (const Error& e) {
        throw StageFailure("baseline", e.what());
      }
      if (points.empty()) throw StageFailure("baseline", "no test point has an optimal solution");
      EvaluationOptions eo;
      eo.k_grid = cfg.k_grid;
      eo.heuristic_node_limit = cfg.heuristic_node_limit;
      eo.timing_repeats = cfg.timing_repeats;
      auto recs = evaluate_online(solver, points, eo);
      auto rows = table_rows(std::to_string(size), g.problem, M_unpruned, M, recs, cfg.k_grid);
      out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    } catch (const StageFailure& e) {
      out.failures.push_back(std::to_string(size) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mlopt
