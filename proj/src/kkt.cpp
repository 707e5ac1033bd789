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

#include "mlopt/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

namespace mlopt {

OpCounts OpCounter::snapshot() const {
  OpCounts c;
  c.factorizations = factorizations_.load();
  c.solves = solves_.load();
  c.decode_calls = decodes_.load();
  c.refinement_steps = refinements_.load();
  c.nn_macs = macs_.load();
  return c;
}

void OpCounter::reset() {
  factorizations_ = 0;
  solves_ = 0;
  decodes_ = 0;
  refinements_ = 0;
  macs_ = 0;
}

namespace {

void check_strategy(const InstanceData& inst, const Strategy& s,
                    std::span<const int> integer_indices) {
  for (int i : s.tight_set())
    if (i < 0 || i >= inst.m) throw DimensionError("strategy: tight row out of range");
  if (s.integer_values().size() != integer_indices.size())
    throw DimensionError("strategy: integer assignment has wrong length");
}

}  // namespace

KKTSystem assemble(const InstanceData& inst, const Strategy& s,
                   std::span<const int> integer_indices) {
  check_strategy(inst, s, integer_indices);
  KKTSystem sys;
  sys.n = inst.n;
  sys.n_tight = static_cast<int>(s.tight_set().size());
  sys.d = static_cast<int>(integer_indices.size());
  const int q = sys.dim();
  std::vector<Triplet> t;
  t.reserve(inst.P.nonZeros() + inst.A.nonZeros() + sys.d);
  for (int j = 0; j < inst.n; ++j)
    for (SparseMatrix::InnerIterator it(inst.P, j); it; ++it) t.emplace_back(it.row(), j, it.value());
  for (int k = 0; k < sys.n_tight; ++k) {
    const int row = s.tight_set()[k];
    for (SparseRowMatrix::InnerIterator it(inst.A, row); it; ++it)
      t.emplace_back(static_cast<int>(it.col()), inst.n + k, it.value());
  }
  for (int l = 0; l < sys.d; ++l) t.emplace_back(integer_indices[l], inst.n + sys.n_tight + l, 1.0);
  sys.K = SparseMatrix(q, q);
  sys.K.setFromTriplets(t.begin(), t.end());
  sys.K.makeCompressed();
  sys.rhs = assemble_rhs(inst, s, integer_indices);
  return sys;
}

Vector assemble_rhs(const InstanceData& inst, const Strategy& s,
                    std::span<const int> integer_indices) {
  check_strategy(inst, s, integer_indices);
  const int nt = static_cast<int>(s.tight_set().size());
  const int d = static_cast<int>(integer_indices.size());
  Vector rhs(inst.n + nt + d);
  rhs.head(inst.n) = -inst.q;
  for (int k = 0; k < nt; ++k) rhs[inst.n + k] = inst.b[s.tight_set()[k]];
  for (int l = 0; l < d; ++l) rhs[inst.n + nt + l] = static_cast<double>(s.integer_values()[l]);
  return rhs;
}

SparseMatrix regularized(const KKTSystem& sys, double delta) {
  return regularized(sys.K, sys.n, delta);
}

SparseMatrix regularized(const SparseMatrix& K_upper, int n, double delta) {
  const int q = static_cast<int>(K_upper.rows());
  SparseMatrix R(q, q);
  std::vector<Triplet> t;
  t.reserve(q);
  for (int i = 0; i < q; ++i) t.emplace_back(i, i, i < n ? delta : -delta);
  R.setFromTriplets(t.begin(), t.end());
  SparseMatrix K = K_upper + R;
  K.makeCompressed();
  return K;
}

SparseLDL factorize(const KKTSystem& sys, OpCounter* counter) {
  SparseMatrix K = regularized(sys);
  SparseLDL f;
  f.factorize(K, kkt_ordering(K, sys.n));
  if (counter) counter->add_factorization();
  return f;
}

DecodeResult solve_refined(const SparseMatrix& K_upper, const SparseLDL& f, const Vector& rhs,
                           int n, OpCounter* counter) {
  DecodeResult out;
  if (!f.ok()) return out;
  const auto K = K_upper.selfadjointView<Eigen::Upper>();
  const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  Vector x = f.solve(rhs);
  long solves = 1;
  Vector r = rhs - K * x;
  double res = r.lpNorm<Eigen::Infinity>();
  int steps = 0;
  while (steps < kMaxRefinementSteps && res > 1e-14 * scale && std::isfinite(res)) {
    Vector dx = f.solve(r);
    ++solves;
    Vector x_new = x + dx;
    Vector r_new = rhs - K * x_new;
    double res_new = r_new.lpNorm<Eigen::Infinity>();
    ++steps;
    if (!(res_new < res)) break;
    x = std::move(x_new);
    r = std::move(r_new);
    res = res_new;
  }
  if (counter) {
    counter->add_solves(solves);
    counter->add_refinement(steps);
  }
  out.refinement_steps = steps;
  out.residual = res / scale;
  out.ok = std::isfinite(out.residual) && out.residual <= kDecodeResidualTol;
  out.x = x.head(n);
  out.nu = x.tail(x.size() - n);
  return out;
}

void FactorCache::build(const ParametricMIQO& problem, std::span<const Strategy> strategies) {
  entries_.clear();
  strategies_.clear();
  order_.clear();
  base_.reset();
  problem_hash_ = problem.content_hash();
  enabled_ = !problem.matrices_parametric();
  if (!enabled_) return;
  for (const auto& s : strategies) insert(problem, s);
}

void FactorCache::insert(const ParametricMIQO& problem, const Strategy& s) {
  if (problem.content_hash() != problem_hash_ && !order_.empty())
    throw ContractViolation("factor cache belongs to a different problem");
  problem_hash_ = problem.content_hash();
  enabled_ = !problem.matrices_parametric();
  if (!enabled_ || entries_.count(s.hash())) return;
  if (!base_) base_ = std::make_shared<InstanceData>(problem.instantiate(Vector::Zero(problem.p_dim())));
  KKTSystem sys = assemble(*base_, s, problem.integer_indices());
  Entry e;
  e.n = problem.n();
  e.K = sys.K;
  e.factors = factorize(sys);
  entries_.emplace(s.hash(), std::move(e));
  strategies_.emplace(s.hash(), s);
  order_.push_back(s.hash());
}

const FactorCache::Entry* FactorCache::find(std::uint64_t strategy_hash) const {
  if (!enabled_) return nullptr;
  auto it = entries_.find(strategy_hash);
  return it == entries_.end() ? nullptr : &it->second;
}

double FactorCache::max_reconstruction_error() const {
  double worst = 0.0;
  for (std::uint64_t h : order_) {
    const Entry& e = entries_.at(h);
    if (!e.factors.ok()) continue;
    worst = std::max(worst, e.factors.reconstruction_error(regularized(e.K, e.n)));
  }
  return worst;
}

double FactorCache::max_backward_error() const {
  double worst = 0.0;
  for (std::uint64_t h : order_) {
    const Entry& e = entries_.at(h);
    if (!e.factors.ok()) continue;
    worst = std::max(worst, e.factors.backward_error(regularized(e.K, e.n)));
  }
  return worst;
}

namespace {
constexpr char kCacheMagic[8] = {'M', 'L', 'K', 'K', 'T', 'F', 'C', '1'};
}

void FactorCache::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write factor cache " + path);
  out.write(kCacheMagic, sizeof(kCacheMagic));
  std::uint8_t en = enabled_ ? 1 : 0;
  std::uint64_t count = order_.size();
  out.write(reinterpret_cast<const char*>(&problem_hash_), sizeof(problem_hash_));
  out.write(reinterpret_cast<const char*>(&en), sizeof(en));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (std::uint64_t h : order_) {
    const Entry& e = entries_.at(h);
    std::int32_t n = e.n;
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    e.factors.write(out);
  }
  // The strategy definitions are needed to rebuild K on load.
  for (std::uint64_t h : order_) {
    const auto& st = strategies_.at(h);
    std::uint64_t nt = st.tight_set().size(), nd = st.integer_values().size();
    out.write(reinterpret_cast<const char*>(&nt), sizeof(nt));
    out.write(reinterpret_cast<const char*>(st.tight_set().data()),
              static_cast<std::streamsize>(nt * sizeof(int)));
    out.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
    out.write(reinterpret_cast<const char*>(st.integer_values().data()),
              static_cast<std::streamsize>(nd * sizeof(std::int64_t)));
  }
  if (!out) throw Error("failed writing factor cache " + path);
}

std::optional<FactorCache> FactorCache::load(const std::string& path,
                                             const ParametricMIQO& problem) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read factor cache " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCacheMagic)) throw FormatError("not a factor cache");
  FactorCache c;
  std::uint8_t en = 0;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&c.problem_hash_), sizeof(c.problem_hash_));
  in.read(reinterpret_cast<char*>(&en), sizeof(en));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) throw FormatError("truncated factor cache");
  if (c.problem_hash_ != problem.content_hash()) return std::nullopt;
  c.enabled_ = en != 0;
  if (c.enabled_ == problem.matrices_parametric()) throw FormatError("factor cache flag mismatch");
  if (count > (std::uint64_t(1) << 32)) throw FormatError("corrupt factor cache");
  std::vector<std::pair<std::uint64_t, Entry>> tmp;
  for (std::uint64_t k = 0; k < count; ++k) {
    std::uint64_t h = 0;
    std::int32_t n = 0;
    in.read(reinterpret_cast<char*>(&h), sizeof(h));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != problem.n()) throw FormatError("corrupt factor cache");
    Entry e;
    e.n = n;
    e.factors.read(in);
    tmp.emplace_back(h, std::move(e));
  }
  InstanceData inst = problem.instantiate(Vector::Zero(problem.p_dim()));
  for (auto& [h, e] : tmp) {
    std::uint64_t nt = 0, nd = 0;
    in.read(reinterpret_cast<char*>(&nt), sizeof(nt));
    if (!in || nt > static_cast<std::uint64_t>(problem.m())) throw FormatError("corrupt factor cache");
    std::vector<int> tight(nt);
    in.read(reinterpret_cast<char*>(tight.data()), static_cast<std::streamsize>(nt * sizeof(int)));
    in.read(reinterpret_cast<char*>(&nd), sizeof(nd));
    if (!in || nd != static_cast<std::uint64_t>(problem.d())) throw FormatError("corrupt factor cache");
    std::vector<std::int64_t> ints(nd);
    in.read(reinterpret_cast<char*>(ints.data()),
            static_cast<std::streamsize>(nd * sizeof(std::int64_t)));
    if (!in) throw FormatError("truncated factor cache");
    Strategy st(std::move(tight), std::move(ints));
    if (st.hash() != h) throw FormatError("factor cache strategy hash mismatch");
    KKTSystem sys = assemble(inst, st, problem.integer_indices());
    if (sys.dim() != e.factors.dim()) throw FormatError("factor cache dimension mismatch");
    e.K = sys.K;
    c.order_.push_back(h);
    c.strategies_.emplace(h, std::move(st));
    c.entries_.emplace(h, std::move(e));
  }
  return c;
}

DecodeResult decode(const InstanceData& inst, const Strategy& s,
                    std::span<const int> integer_indices, const FactorCache* cache,
                    OpCounter* counter) {
  if (counter) counter->add_decode();
  const FactorCache::Entry* e = cache ? cache->find(s.hash()) : nullptr;
  if (e) {
    Vector rhs = assemble_rhs(inst, s, integer_indices);
    if (rhs.size() != e->factors.dim()) throw DimensionError("decode: cached factor size");
    DecodeResult r = solve_refined(e->K, e->factors, rhs, inst.n, counter);
    r.used_cache = true;
    return r;
  }
  KKTSystem sys = assemble(inst, s, integer_indices);
  SparseLDL f = factorize(sys, counter);
  return solve_refined(sys.K, f, sys.rhs, inst.n, counter);
}

namespace {

CandidateEvaluation evaluate_one(const InstanceData& inst, const Strategy& s, int index,
                                 std::span<const int> ints, const FactorCache* cache,
                                 OpCounter* counter) {
  CandidateEvaluation ev;
  ev.index = index;
  ev.strategy = s;
  DecodeResult r = decode(inst, s, ints, cache, counter);
  if (r.x.size() != inst.n || !r.x.allFinite()) return ev;
  // A failed decode keeps its refined point so that its violation can be
  // measured, but it is never feasible.
  ev.decoded = r.ok;
  ev.objective = inst.objective(r.x);
  ev.violation = violation(inst, r.x);
  ev.x = std::move(r.x);
  return ev;
}

}  // namespace

EvaluationResult evaluate_candidates(const InstanceData& inst,
                                     std::span<const Strategy> candidates,
                                     std::span<const int> integer_indices,
                                     const FactorCache* cache, OpCounter* counter, int threads) {
  if (candidates.empty()) throw DimensionError("evaluate_candidates: no candidates");
  const int k = static_cast<int>(candidates.size());
  std::vector<CandidateEvaluation> evals(k);
  const int workers = std::clamp(threads, 1, k);
  if (workers == 1) {
    for (int i = 0; i < k; ++i)
      evals[i] = evaluate_one(inst, candidates[i], i, integer_indices, cache, counter);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < k; i += workers)
            evals[i] = evaluate_one(inst, candidates[i], i, integer_indices, cache, counter);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::stable_sort(evals.begin(), evals.end(),
                   [](const CandidateEvaluation& a, const CandidateEvaluation& b) {
                     const bool fa = a.feasible(), fb = b.feasible();
                     if (fa != fb) return fa;
                     if (fa) return a.objective < b.objective;
                     return a.violation < b.violation;
                   });
  EvaluationResult out;
  out.any_feasible = evals.front().feasible();
  out.ranked = std::move(evals);
  return out;
}

}  // namespace mlopt
