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

#include <catch2/catch_amalgamated.hpp>

#include "ssbsim/beamforming.hpp"

using namespace ssbsim;
using Catch::Approx;

namespace {

CxMat random_hermitian(int n, uint64_t seed) {
  auto rng = make_rng(seed, 0);
  std::normal_distribution<double> g;
  CxMat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cxd(g(rng), g(rng));
  return (a + a.adjoint()) / 2.0;
}

CxMat random_psd_trace_n(int n, uint64_t seed) {
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> g;
  CxMat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cxd(g(rng), g(rng));
  CxMat r = a * a.adjoint();
  r *= static_cast<double>(n) / r.real().trace();
  return r;
}

CorrelationModel model_from(const CxMat& r, double sigma_eff2) {
  CorrelationModel m;
  m.angle_corr = r;
  m.attenuation = 1.0;
  m.effective_noise_var = sigma_eff2;
  return m;
}

}  // namespace

TEST_CASE("svec/smat is an inner-product-preserving bijection") {
  for (int n : {2, 5, 8}) {
    const CxMat a = random_hermitian(n, 10 + n);
    const CxMat b = random_hermitian(n, 20 + n);
    REQUIRE((sdp::smat(sdp::svec(a), n) - a).norm() < 1e-14);
    const double direct = (a * b).trace().real();
    REQUIRE(sdp::svec(a).dot(sdp::svec(b)) == Approx(direct).epsilon(1e-12));
    REQUIRE(sdp::svec(a).squaredNorm() == Approx(a.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("single-user subproblem attains the principal-eigenvector optimum") {
  // K=1, gamma=0: maximize log2(tr(R W) + sigma^2) s.t. tr(W) <= P is solved
  // by W* = P q q^H with q the principal eigenvector.
  const int n = 12;
  const CxMat r = random_psd_trace_n(n, 3);
  const auto models = std::vector<CorrelationModel>{model_from(r, 0.4)};
  sdp::Settings st;
  st.eps_abs = st.eps_rel = 1e-10;
  const double p_max = 2.0;
  const auto sol = solve_convex_subproblem(models, Vec::Constant(1, 0.4), p_max,
                                           Vec::Zero(1), st);
  REQUIRE(sol.status == sdp::SolveStatus::kOptimal);

  Eigen::SelfAdjointEigenSolver<CxMat> es(r);
  const double lmax = es.eigenvalues().maxCoeff();
  const CxVec q = es.eigenvectors().col(n - 1);
  const CxMat expected = p_max * q * q.adjoint();
  REQUIRE(sol.a(0) == Approx(p_max * lmax).epsilon(1e-6));
  REQUIRE((sol.w_relaxed[0] - expected).norm() / expected.norm() < 1e-5);
}

TEST_CASE("interior optimum satisfies the cone KKT conditions") {
  // Two users sharing one correlation matrix with a strong interference
  // penalty: the optimum sits strictly inside the power ball, where
  // stationarity requires D_j = sum_k R_k/(u_k ln2) - sum_{k!=j} c_k R_k to be
  // negative semidefinite with D_j W_j = 0.
  const int n = 8;
  const CxMat r = random_psd_trace_n(n, 5);
  const double sigma2 = 1.0;
  const std::vector<CorrelationModel> models = {model_from(r, sigma2), model_from(r, sigma2)};
  const double p_max = 1.0;
  const Vec b_fixed = Vec::Constant(2, 1.0);  // c_k = 1/ln2: interior optimum u* = 2
  sdp::Settings st;
  st.eps_abs = st.eps_rel = 1e-11;
  st.max_iters = 200000;
  const auto sol = solve_convex_subproblem(models, b_fixed, p_max, Vec::Zero(2), st);
  REQUIRE(sol.status == sdp::SolveStatus::kOptimal);

  // Power constraint inactive.
  const double used = sol.w_relaxed[0].real().trace() + sol.w_relaxed[1].real().trace();
  REQUIRE(used < 0.9 * p_max);

  const double u0 = sol.a(0) + sol.b(0);  // b includes sigma^2 and cross trace
  const double u1 = sol.a(1) + sol.b(1);
  for (int j = 0; j < 2; ++j) {
    CxMat d = (1.0 / (u0 * kLn2)) * r + (1.0 / (u1 * kLn2)) * r;
    d -= (1.0 / (b_fixed(1 - j) * kLn2)) * r;
    Eigen::SelfAdjointEigenSolver<CxMat> es(d);
    const double scale = std::max(d.norm(), 1e-12);
    REQUIRE(es.eigenvalues().maxCoeff() <= 1e-6 * scale + 1e-10);
    REQUIRE((d * sol.w_relaxed[j]).norm() <=
            1e-6 * scale * std::max(sol.w_relaxed[j].norm(), 1.0) + 1e-9);
  }
}

TEST_CASE("returned covariances are PSD and satisfy the power budget") {
  const int n = 10;
  const std::vector<CorrelationModel> models = {model_from(random_psd_trace_n(n, 8), 0.3),
                                                model_from(random_psd_trace_n(n, 9), 0.5)};
  sdp::Settings st;
  st.eps_abs = st.eps_rel = 1e-9;
  const double p_max = 1.5;
  const auto sol = solve_convex_subproblem(models, Vec::Constant(2, 0.7), p_max,
                                           Vec::Constant(2, 0.5), st);
  double total = 0.0;
  for (const auto& w : sol.w_relaxed) {
    Eigen::SelfAdjointEigenSolver<CxMat> es(w);
    REQUIRE(es.eigenvalues().minCoeff() > -1e-8);
    total += w.real().trace();
  }
  REQUIRE(total <= p_max * (1.0 + 1e-6));
  // SINR constraints hold at the solution.
  for (int k = 0; k < 2; ++k) REQUIRE(sol.a(k) >= 0.5 * sol.b(k) * (1.0 - 1e-4));
}

TEST_CASE("zero power budget collapses to the zero beamformer") {
  const int n = 6;
  const std::vector<CorrelationModel> models = {model_from(random_psd_trace_n(n, 11), 0.2)};
  const auto sol = solve_sca(models, 0.0, Vec::Zero(1));
  REQUIRE(sol.status == sdp::SolveStatus::kOptimal);
  REQUIRE(sol.w_relaxed[0].norm() == 0.0);
  REQUIRE(sol.objective == 0.0);
}

TEST_CASE("unreachable SINR thresholds are reported infeasible") {
  const int n = 6;
  const std::vector<CorrelationModel> models = {model_from(random_psd_trace_n(n, 12), 1.0),
                                                model_from(random_psd_trace_n(n, 13), 1.0)};
  const auto sol = solve_sca(models, 1.0, Vec::Constant(2, 1e9));
  REQUIRE(sol.status == sdp::SolveStatus::kInfeasible);
}

TEST_CASE("jointly infeasible moderate thresholds are caught by the presolve") {
  // Identical correlation for both users: same-direction beams interfere
  // fully, so gamma = 100 for both cannot hold jointly although each user
  // alone could reach it.
  const int n = 8;
  const CxMat r = random_psd_trace_n(n, 21);
  const std::vector<CorrelationModel> models = {model_from(r, 1e-4), model_from(r, 1e-4)};
  const Vec gammas = Vec::Constant(2, 100.0);
  // Single-user certificate does not trigger:
  Eigen::SelfAdjointEigenSolver<CxMat> es(r);
  REQUIRE(1.0 * es.eigenvalues().maxCoeff() > 100.0 * 1e-4);
  const auto sol = solve_sca(models, 1.0, gammas);
  REQUIRE(sol.status == sdp::SolveStatus::kInfeasible);
}

TEST_CASE("warm-started resolve of the same problem terminates immediately") {
  const int n = 8;
  const std::vector<CorrelationModel> models = {model_from(random_psd_trace_n(n, 14), 0.3)};
  ScaSettings st;
  st.inner.eps_abs = st.inner.eps_rel = 1e-8;
  st.inner.check_every = 5;
  ScaWorkspace ws;
  const auto first = solve_sca(models, 1.0, Vec::Zero(1), st, &ws);
  const auto second = solve_sca(models, 1.0, Vec::Zero(1), st, &ws);
  REQUIRE(second.objective == Approx(first.objective).epsilon(1e-6));
  REQUIRE(second.inner_iters < first.inner_iters / 4);
}

TEST_CASE("basis reduction is lossless for low-rank correlation data") {
  // Rank-2 correlation matrices: the reduced solve must match the full solve.
  const int n = 16;
  auto rng = make_rng(31, 2);
  std::normal_distribution<double> g;
  auto rank2 = [&](uint64_t) {
    CxMat a(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) a(i, j) = cxd(g(rng), g(rng));
    CxMat r = a * a.adjoint();
    r *= static_cast<double>(n) / r.real().trace();
    return r;
  };
  const std::vector<CorrelationModel> models = {model_from(rank2(0), 0.2),
                                                model_from(rank2(1), 0.4)};
  ScaSettings tight;
  tight.inner.eps_abs = tight.inner.eps_rel = 1e-10;
  tight.eps = 1e-8;
  ScaSettings full = tight;
  full.basis_tol = 0.0;  // keep the entire space
  const auto reduced = solve_sca(models, 1.0, Vec::Constant(2, 0.2), tight);
  const auto complete = solve_sca(models, 1.0, Vec::Constant(2, 0.2), full);
  REQUIRE(reduced.objective == Approx(complete.objective).epsilon(1e-5));
}
