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

#pragma once

// Independent extended-precision network evaluation used as the
// finite-difference oracle for backpropagation.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mlopt/classifier.hpp"

namespace mlopt::testing {

using LongVec = std::vector<long double>;

struct LongNet {
  std::vector<std::vector<LongVec>> W;  // W[l][i][j]
  std::vector<LongVec> b;
  LongVec mean, scale;
};

inline LongNet to_long(const NetworkModel& m) {
  LongNet n;
  for (int l = 0; l < m.num_layers(); ++l) {
    std::vector<LongVec> rows(m.W[l].rows(), LongVec(m.W[l].cols()));
    for (Eigen::Index i = 0; i < m.W[l].rows(); ++i)
      for (Eigen::Index j = 0; j < m.W[l].cols(); ++j) rows[i][j] = m.W[l](i, j);
    n.W.push_back(rows);
    n.b.emplace_back(m.b[l].data(), m.b[l].data() + m.b[l].size());
  }
  n.mean.assign(m.input_mean.data(), m.input_mean.data() + m.input_mean.size());
  n.scale.assign(m.input_scale.data(), m.input_scale.data() + m.input_scale.size());
  return n;
}

inline long double reference_loss(const LongNet& n, const Matrix& X, const std::vector<int>& y) {
  long double total = 0.0L;
  const std::size_t L = n.W.size();
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    LongVec a(X.rows());
    for (Eigen::Index k = 0; k < X.rows(); ++k) a[k] = (X(k, c) - n.mean[k]) / n.scale[k];
    for (std::size_t l = 0; l < L; ++l) {
      LongVec z(n.b[l]);
      for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j) z[i] += n.W[l][i][j] * a[j];
      if (l + 1 < L)
        for (auto& v : z) v = std::max(v, 0.0L);
      a = std::move(z);
    }
    const long double mx = *std::max_element(a.begin(), a.end());
    long double s = 0.0L;
    for (auto v : a) s += std::exp(v - mx);
    total += mx + std::log(s) - a[y[c]];
  }
  return total / static_cast<long double>(X.cols());
}

/// Largest elementwise relative error |g - fd| / max(|g|, |fd|, floor) of
/// the backprop gradient against central differences of reference_loss.
inline double gradient_check(const NetworkModel& m, const Matrix& X, const std::vector<int>& y,
                             double h = 1e-5, double floor = 1e-6) {
  Gradients g;
  cross_entropy(m, X, y, &g);
  LongNet n = to_long(m);
  double worst = 0.0;
  auto check = [&](long double& w, double analytic) {
    const long double saved = w;
    w = saved + h;
    const long double fp = reference_loss(n, X, y);
    w = saved - h;
    const long double fm = reference_loss(n, X, y);
    w = saved;
    const double fd = static_cast<double>((fp - fm) / (2.0L * h));
    const double denom = std::max({std::abs(fd), std::abs(analytic), floor});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  };
  for (int l = 0; l < m.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < m.W[l].rows(); ++i)
      for (Eigen::Index j = 0; j < m.W[l].cols(); ++j) check(n.W[l][i][j], g.dW[l](i, j));
    for (Eigen::Index i = 0; i < m.b[l].size(); ++i) check(n.b[l][i], g.db[l][i]);
  }
  return worst;
}

}  // namespace mlopt::testing
