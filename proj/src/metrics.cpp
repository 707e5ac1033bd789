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

#include "mlopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace mlopt {

double suboptimality(double f_hat, double f_star, double infeasibility) {
  if (!(infeasibility <= kFeasTolerance))
    throw ContractViolation("suboptimality of an infeasible prediction");
  return std::max(0.0, (f_hat - f_star) / std::max(std::abs(f_star), 1e-10));
}

double EvalRecord::subopt() const {
  if (!feasible()) return std::nan("");
  return suboptimality(objective, f_star, infeasibility);
}

bool accurate(const EvalRecord& r, double eps_inf, double eps_sub) {
  if (!(r.infeasibility <= eps_inf) || !r.feasible()) return false;
  return r.subopt() <= eps_sub;
}

double accuracy(std::span<const EvalRecord> records, double eps_inf, double eps_sub) {
  if (records.empty()) throw ContractViolation("accuracy of an empty record set");
  long hits = 0;
  for (const auto& r : records) hits += accurate(r, eps_inf, eps_sub);
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

double max_of(std::span<const double> v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

double coefficient_of_variation(std::span<const double> v) {
  const double m = mean(v);
  if (v.empty() || m == 0.0) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size())) / m;
}

double median_time(const std::function<void()>& fn, int repeats) {
  std::vector<double> t;
  for (int r = 0; r < std::max(repeats, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return median(t);
}

Summary summarize(std::span<const EvalRecord> records) {
  Summary s;
  s.count = static_cast<long>(records.size());
  if (records.empty()) return s;
  std::vector<double> pred, full, heur, sub, inf;
  for (const auto& r : records) {
    pred.push_back(r.online_time());
    full.push_back(r.oracle_time);
    heur.push_back(r.heuristic_time);
    inf.push_back(r.infeasibility);
    if (r.feasible()) sub.push_back(r.subopt());
  }
  s.feasible = static_cast<long>(sub.size());
  s.mean_time_pred = mean(pred);
  s.max_time_pred = max_of(pred);
  s.median_time_pred = median(pred);
  s.mean_time_full = mean(full);
  s.max_time_full = max_of(full);
  s.median_time_full = median(full);
  s.mean_time_heuristic = mean(heur);
  s.max_time_heuristic = max_of(heur);
  s.cv_time_pred = coefficient_of_variation(pred);
  s.cv_time_full = coefficient_of_variation(full);
  s.avg_subopt = mean(sub);
  s.avg_infeas = mean(inf);
  s.accuracy = accuracy(records);
  return s;
}

nlohmann::json to_json(const Summary& s) {
  return {{"count", s.count},
          {"feasible", s.feasible},
          {"mean_time_pred", s.mean_time_pred},
          {"max_time_pred", s.max_time_pred},
          {"median_time_pred", s.median_time_pred},
          {"mean_time_full", s.mean_time_full},
          {"max_time_full", s.max_time_full},
          {"median_time_full", s.median_time_full},
          {"mean_time_heuristic", s.mean_time_heuristic},
          {"max_time_heuristic", s.max_time_heuristic},
          {"cv_time_pred", s.cv_time_pred},
          {"cv_time_full", s.cv_time_full},
          {"avg_subopt", s.avg_subopt},
          {"avg_infeas", s.avg_infeas},
          {"accuracy", s.accuracy}};
}

const std::vector<std::string>& table_columns() {
  static const std::vector<std::string> cols{
      "size_param",     "n_var",          "n_constr",           "M_unpruned",
      "M",              "n_best",         "mean_time_pred",     "max_time_pred",
      "mean_time_full", "max_time_full",  "mean_time_heuristic", "max_time_heuristic",
      "avg_subopt",     "avg_infeas",     "accuracy"};
  return cols;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, std::span<const TableRow> rows) {
  const auto& cols = table_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << "\r\n";
  for (const auto& r : rows) {
    const Summary& s = r.summary;
    const std::vector<std::string> f{csv_field(r.size_param),
                                     std::to_string(r.n_var),
                                     std::to_string(r.n_constr),
                                     std::to_string(r.M_unpruned),
                                     std::to_string(r.M),
                                     std::to_string(r.n_best),
                                     num(s.mean_time_pred),
                                     num(s.max_time_pred),
                                     num(s.mean_time_full),
                                     num(s.max_time_full),
                                     num(s.mean_time_heuristic),
                                     num(s.max_time_heuristic),
                                     num(s.avg_subopt),
                                     num(s.avg_infeas),
                                     num(s.accuracy)};
    for (std::size_t c = 0; c < f.size(); ++c) out << (c ? "," : "") << f[c];
    out << "\r\n";
  }
}

nlohmann::json rows_to_json(const std::string& family, std::span<const TableRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = to_json(r.summary);
    j["size_param"] = r.size_param;
    j["n_var"] = r.n_var;
    j["n_constr"] = r.n_constr;
    j["M_unpruned"] = r.M_unpruned;
    j["M"] = r.M;
    j["n_best"] = r.n_best;
    arr.push_back(j);
  }
  // The heuristic columns come from a node-limited run of the exact solver.
  return {{"family", family},
          {"columns", table_columns()},
          {"heuristic_baseline", "heuristic-emulated"},
          {"rows", arr}};
}

std::vector<std::string> emit_report(const std::string& dir, const std::string& family,
                                     std::span<const TableRow> rows,
                                     std::span<const std::string> expected_sizes,
                                     std::span<const int> expected_k) {
  std::vector<std::string> warnings;
  for (const auto& size : expected_sizes)
    for (int k : expected_k) {
      const bool found = std::any_of(rows.begin(), rows.end(), [&](const TableRow& r) {
        return r.size_param == size && r.n_best == k;
      });
      if (!found)
        warnings.push_back("missing row for size " + size + ", k = " + std::to_string(k));
    }
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir) / family;
  {
    std::ofstream csv(base.string() + ".csv", std::ios::binary);
    if (!csv) throw Error("cannot write " + base.string() + ".csv");
    write_csv(csv, rows);
  }
  nlohmann::json summary = rows_to_json(family, rows);
  summary["warnings"] = warnings;
  std::ofstream js(base.string() + ".json");
  if (!js) throw Error("cannot write " + base.string() + ".json");
  js << summary.dump(2) << "\n";
  return warnings;
}

}  // namespace mlopt
