// SPDX-License-Identifier: Apache-2.0
//
// ssbsim: SSB-based monostatic sensing, EKF target tracking, and
// uncertainty-aware multi-user beamforming for hybrid-array base stations.
// Copyright (C) 2026 the ssbsim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SSBSIM_QUADRATURE_HPP
#define SSBSIM_QUADRATURE_HPP

#include <map>
#include <stdexcept>

#include "ssbsim/common.hpp"

namespace ssbsim {

/// Gauss-Hermite rule for integrals against exp(-x^2), computed via
/// Golub-Welsch on the Jacobi matrix of the (physicists') Hermite recurrence.
struct GaussHermite {
  Vec nodes;
  Vec weights;  // sum to sqrt(pi)

  static const GaussHermite& get(int n) {
    thread_local std::map<int, GaussHermite> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute(n)).first;
    return it->second;
  }

  static GaussHermite compute(int n) {
    if (n < 1) throw std::invalid_argument("GaussHermite: need at least one node");
    Mat jacobi = Mat::Zero(n, n);
    for (int k = 0; k < n - 1; ++k) {
      const double off = std::sqrt((k + 1) / 2.0);
      jacobi(k, k + 1) = off;
      jacobi(k + 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
    GaussHermite gh;
    gh.nodes = es.eigenvalues();
    gh.weights.resize(n);
    const double sqrt_pi = std::sqrt(kPi);
    for (int i = 0; i < n; ++i) {
      const double v0 = es.eigenvectors()(0, i);
      gh.weights(i) = sqrt_pi * v0 * v0;
    }
    return gh;
  }
};

/// E[f(X)] for X ~ N(mean, std^2) using an n-node Gauss-Hermite rule;
/// std == 0 degenerates to f(mean).
template <typename F>
double gauss_hermite_expectation(F&& f, double mean, double stddev, int n_nodes = 9) {
  if (stddev == 0.0) return f(mean);
  const auto& gh = GaussHermite::get(n_nodes);
  double acc = 0.0;
  for (int i = 0; i < n_nodes; ++i)
    acc += gh.weights(i) * f(mean + std::sqrt(2.0) * stddev * gh.nodes(i));
  return acc / std::sqrt(kPi);
}

}  // namespace ssbsim

#endif  // SSBSIM_QUADRATURE_HPP
