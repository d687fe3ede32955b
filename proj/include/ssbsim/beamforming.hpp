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

#ifndef SSBSIM_BEAMFORMING_HPP
#define SSBSIM_BEAMFORMING_HPP

#include <stdexcept>
#include <vector>

#include "ssbsim/common.hpp"
#include "ssbsim/quadrature.hpp"
#include "ssbsim/radio.hpp"
#include "ssbsim/sdp.hpp"

namespace ssbsim {

inline constexpr double kLn2 = 0.6931471805599453;

/// Gaussian priors of one user's spherical parameters plus link parameters.
struct UserPrior {
  double range_m = 100.0;
  double elevation_rad = 0.0;
  double azimuth_rad = 0.0;
  double sigma_r = 0.0;
  double sigma_el = 0.0;
  double sigma_az = 0.0;
  double noise_var = 1e-12;             // sigma_z^2 (W)
  double sinr_threshold_linear = 1.0;   // gamma

  void validate() const {
    if (range_m <= 0.0 || sigma_r < 0.0 || sigma_el < 0.0 || sigma_az < 0.0)
      throw std::invalid_argument("UserPrior: invalid range or sigmas");
    if (sinr_threshold_linear < 0.0 || noise_var <= 0.0)
      throw std::invalid_argument("UserPrior: invalid gamma or noise variance");
  }
};

/// Uncertainty-averaged channel statistics of one user.
struct CorrelationModel {
  double attenuation = 0.0;          // C_r, power gain
  CxMat angle_corr;                  // R_{phi,theta}, trace = N_TX
  double effective_noise_var = 0.0;  // sigma_z^2 / C_r
};

/// Range-averaged free-space attenuation C_r = E[ (lambda / 4 pi r)^2 ] under
/// the Gaussian range prior, via Gauss-Hermite quadrature.
inline double attenuation_constant(const UserPrior& prior, const RadioConfig& radio,
                                   int n_nodes = 9) {
  if (!(prior.range_m > 4.0 * prior.sigma_r))
    throw std::domain_error("attenuation_constant: range prior too wide (r <= 4 sigma_r)");
  const double lambda = radio.wavelength();
  return gauss_hermite_expectation(
      [&](double r) {
        const double amp = lambda / (4.0 * kPi * r);
        return amp * amp;
      },
      prior.range_m, prior.sigma_r, n_nodes);
}

/// Angle correlation matrix E[a a^H] under independent Gaussian priors on
/// elevation and azimuth (tensor-product Gauss-Hermite), Hermitized and
/// floored onto the PSD cone.
inline CxMat angle_correlation(const UserPrior& prior, const UpaConfig& upa,
                               const RadioConfig& radio, int n_nodes = 9) {
  if (!(std::abs(prior.elevation_rad) + 3.0 * prior.sigma_el < kPi / 2.0))
    throw std::domain_error("angle_correlation: elevation prior leaves the array field of view");
  const int n = upa.n_elements();
  const auto& gh = GaussHermite::get(n_nodes);
  const double el_limit = kPi / 2.0 - 1e-6;

  const bool delta_el = prior.sigma_el == 0.0;
  const bool delta_az = prior.sigma_az == 0.0;
  const int n_el = delta_el ? 1 : n_nodes;
  const int n_az = delta_az ? 1 : n_nodes;

  CxMat r = CxMat::Zero(n, n);
  double weight_sum = 0.0;
  for (int i = 0; i < n_el; ++i) {
    const double wel = delta_el ? 1.0 : gh.weights(i);
    double el = prior.elevation_rad +
                (delta_el ? 0.0 : std::sqrt(2.0) * prior.sigma_el * gh.nodes(i));
    el = std::clamp(el, -el_limit, el_limit);
    for (int j = 0; j < n_az; ++j) {
      const double waz = delta_az ? 1.0 : gh.weights(j);
      const double az = prior.azimuth_rad +
                        (delta_az ? 0.0 : std::sqrt(2.0) * prior.sigma_az * gh.nodes(j));
      const CxVec a = steering_vector(upa, radio, el, az);
      r.noalias() += (wel * waz) * (a * a.adjoint());
      weight_sum += wel * waz;
    }
  }
  r /= weight_sum;
  r = (r + r.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<CxMat> es(r);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().adjoint();
}

inline CorrelationModel build_correlation_model(const UserPrior& prior, const UpaConfig& upa,
                                                const RadioConfig& radio, int n_nodes = 9) {
  prior.validate();
  CorrelationModel m;
  m.attenuation = attenuation_constant(prior, radio, n_nodes);
  m.angle_corr = angle_correlation(prior, upa, radio, n_nodes);
  m.effective_noise_var = prior.noise_var / m.attenuation;
  return m;
}

/// Average SINR of user k under beamformer columns W (one column per user):
///   w_k^H R_k w_k / (sum_{i != k} w_i^H R_k w_i + sigma_eff,k^2).
inline double average_sinr(const CxMat& w_columns, const std::vector<CorrelationModel>& models,
                           int k) {
  const auto& m = models[k];
  const double sig = std::real(w_columns.col(k).dot(m.angle_corr * w_columns.col(k)));
  double mui = 0.0;
  for (int i = 0; i < w_columns.cols(); ++i)
    if (i != k) mui += std::real(w_columns.col(i).dot(m.angle_corr * w_columns.col(i)));
  return sig / (mui + m.effective_noise_var);
}

inline double average_sum_rate(const CxMat& w_columns,
                               const std::vector<CorrelationModel>& models) {
  double acc = 0.0;
  for (size_t k = 0; k < models.size(); ++k)
    acc += std::log2(1.0 + average_sinr(w_columns, models, static_cast<int>(k)));
  return acc;
}

/// Relaxed per-user covariances W_k plus the bookkeeping of the SCA run.
struct SdpSolution {
  std::vector<CxMat> w_relaxed;   // PSD, original power units
  Vec a;                          // tr(R_k W_k)
  Vec b;                          // sum_{i != k} tr(R_k W_i) + sigma_eff,k^2
  double objective = 0.0;         // average sum-rate of the relaxed solution
  std::vector<double> surrogate_history;
  std::vector<double> rate_history;
  sdp::SolveStatus status = sdp::SolveStatus::kOptimal;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int sca_iters = 0;
  int inner_iters = 0;
};

struct ScaSettings {
  double eps = 1e-3;     // |surrogate difference| stopping threshold
  int max_iters = 50;
  double basis_tol = 1e-10;  // relative eigenmass kept out of the solve basis
  sdp::Settings inner;
};

namespace detail {

// Problem data nondimensionalized so traces, power, and noise are O(1):
// W' = W / P, R' = R / tau, sigma'^2 = sigma_eff^2 / (P tau).
//
// The optimization is also restricted to span(sum_k R_k): every objective and
// constraint term reads W only through tr(R_k W) and tr(W), and projecting W
// onto that span preserves the former while never increasing the latter, so
// the restriction is lossless up to the explicitly truncated eigenmass.
// Angle-correlation matrices have small effective rank, which shrinks the
// PSD blocks from N x N to r x r.
struct ScaledModels {
  std::vector<Vec> r_svec;  // svec of reduced R'_k
  std::vector<CxMat> r;     // reduced R'_k (r x r)
  CxMat basis;              // N x r, orthonormal columns
  Vec sigma2;               // sigma'_k^2
  Vec gamma;
  double tau = 0.0;
  double p_max = 0.0;
  int n = 0;  // reduced dimension r
  int k = 0;

  CxMat expand(const CxMat& reduced) const { return basis * reduced * basis.adjoint(); }
};

inline ScaledModels scale_models(const std::vector<CorrelationModel>& models, double p_max,
                                 const Vec& gammas, double basis_tol = 1e-10) {
  ScaledModels s;
  s.k = static_cast<int>(models.size());
  s.p_max = p_max;
  s.gamma = gammas;
  const int n_full = static_cast<int>(models[0].angle_corr.rows());
  double tau = 0.0;
  for (const auto& m : models) tau += m.angle_corr.real().trace();
  s.tau = tau / s.k;

  CxMat sum = CxMat::Zero(n_full, n_full);
  for (const auto& m : models) sum += m.angle_corr / s.tau;
  Eigen::SelfAdjointEigenSolver<CxMat> es(sum);
  const double lmax = es.eigenvalues().maxCoeff();
  int first = 0;
  while (first < n_full - 1 && es.eigenvalues()(first) <= basis_tol * lmax) ++first;
  s.basis = es.eigenvectors().rightCols(n_full - first);
  s.n = static_cast<int>(s.basis.cols());

  s.sigma2.resize(s.k);
  for (int k = 0; k < s.k; ++k) {
    CxMat reduced = s.basis.adjoint() * (models[k].angle_corr / s.tau) * s.basis;
    reduced = (reduced + reduced.adjoint()) / 2.0;
    s.r.push_back(reduced);
    s.r_svec.push_back(sdp::svec(reduced));
    s.sigma2(k) = models[k].effective_noise_var / (p_max * s.tau);
  }
  return s;
}

// Equality rows shared by the subproblem and the feasibility problem:
//   u_k - sum_j <R'_k, W'_j>                        = sigma'_k   (subproblem)
//   <R'_k, W'_k> - gamma_k sum_{j!=k} <R'_k, W'_j> - s_k [- t] = gamma_k sigma'_k
//   sum_k tr(W'_k) + s_pow                          = 1
inline void fill_sinr_and_power_rows(const ScaledModels& s, int row0, int pos_offset,
                                     int free_t_col, Mat& a, Vec& b) {
  const int bs = s.n * s.n;
  const Vec eye = sdp::svec(CxMat::Identity(s.n, s.n));
  for (int k = 0; k < s.k; ++k) {
    const int row = row0 + k;
    for (int j = 0; j < s.k; ++j) {
      const double coef = (j == k) ? 1.0 : -s.gamma(k);
      a.row(row).segment(j * bs, bs) += coef * s.r_svec[k].transpose();
    }
    a(row, pos_offset + k) = -1.0;
    if (free_t_col >= 0) a(row, free_t_col) = -1.0;
    b(row) = s.gamma(k) * s.sigma2(k);
  }
  const int prow = row0 + s.k;
  for (int j = 0; j < s.k; ++j) a.row(prow).segment(j * bs, bs) = eye.transpose();
  a(prow, pos_offset + s.k) = 1.0;
  b(prow) = 1.0;
}

struct SubproblemOutputs {
  std::vector<CxMat> w;  // scaled
  Vec total;             // T_k = sum_j tr(R'_k W'_j)
  Vec own;               // a_k = tr(R'_k W'_k)
};

inline SubproblemOutputs extract_w(const ScaledModels& s, const Vec& x) {
  SubproblemOutputs out;
  const int bs = s.n * s.n;
  for (int k = 0; k < s.k; ++k) out.w.push_back(sdp::smat(x.segment(k * bs, bs), s.n));
  out.total = Vec::Zero(s.k);
  out.own = Vec::Zero(s.k);
  for (int k = 0; k < s.k; ++k)
    for (int j = 0; j < s.k; ++j) {
      const double t = std::max(0.0, (s.r[k] * out.w[j]).real().trace());
      out.total(k) += t;
      if (j == k) out.own(k) = t;
    }
  return out;
}

// One convex subproblem in scaled units: maximize
//   sum_k [ log2(u_k) - lin_k * sum_{j != k} tr(R'_k W'_j) ]
// with u_k tied to the total received power plus effective noise.
inline sdp::ConicResult solve_subproblem_scaled(const ScaledModels& s, const Vec& lin_coeff,
                                                sdp::ConicSolver& solver,
                                                const sdp::Settings& settings) {
  sdp::ConicProblem p;
  p.psd_dim = s.n;
  p.n_blocks = s.k;
  p.log_weights = Vec::Constant(s.k, 1.0 / kLn2);
  p.n_pos = s.k + 1;
  p.n_free = 0;
  const int bs = s.n * s.n;
  const int dim = p.dim();
  const int m = 2 * s.k + 1;
  p.a = Mat::Zero(m, dim);
  p.b = Vec::Zero(m);
  p.c = Vec::Zero(dim);

  for (int k = 0; k < s.k; ++k) {
    p.a(k, p.log_offset() + k) = 1.0;
    for (int j = 0; j < s.k; ++j)
      p.a.row(k).segment(j * bs, bs) -= s.r_svec[k].transpose();
    p.b(k) = s.sigma2(k);
  }
  fill_sinr_and_power_rows(s, s.k, p.pos_offset(), -1, p.a, p.b);

  for (int j = 0; j < s.k; ++j)
    for (int k = 0; k < s.k; ++k)
      if (k != j) p.c.segment(j * bs, bs) += lin_coeff(k) * s.r_svec[k];

  return solver.solve(p, settings);
}

// Feasibility pre-solve: maximize the minimum SINR-constraint slack.
struct FeasibilityOutcome {
  std::vector<CxMat> w;  // scaled
  double min_slack = 0.0;
  bool feasible = false;
};

inline FeasibilityOutcome solve_feasibility_scaled(const ScaledModels& s,
                                                   const sdp::Settings& settings) {
  sdp::ConicProblem p;
  p.psd_dim = s.n;
  p.n_blocks = s.k;
  p.log_weights = Vec(0);
  p.n_pos = s.k + 1;
  p.n_free = 1;
  const int dim = p.dim();
  const int m = s.k + 1;
  p.a = Mat::Zero(m, dim);
  p.b = Vec::Zero(m);
  p.c = Vec::Zero(dim);
  fill_sinr_and_power_rows(s, 0, p.pos_offset(), p.free_offset(), p.a, p.b);
  p.c(p.free_offset()) = -1.0;  // maximize t

  sdp::ConicSolver solver;
  const auto res = solver.solve(p, settings);
  FeasibilityOutcome out;
  out.min_slack = res.x(p.free_offset());
  out.feasible = out.min_slack >= -1e-7;
  const int bs = s.n * s.n;
  for (int k = 0; k < s.k; ++k) out.w.push_back(sdp::smat(res.x.segment(k * bs, bs), s.n));
  return out;
}

}  // namespace detail

/// Reusable SCA state: keeps the inner solver warm across consecutive calls
/// with slowly varying priors.
struct ScaWorkspace {
  sdp::ConicSolver solver;
  void reset() { solver.reset(); }
};

/// One convex SDR-SCA subproblem with fixed interference levels b_fixed
/// (original units). Exposed for direct testing; solve_sca drives it.
inline SdpSolution solve_convex_subproblem(const std::vector<CorrelationModel>& models,
                                           const Vec& b_fixed, double p_max, const Vec& gammas,
                                           const sdp::Settings& settings = {},
                                           double basis_tol = 1e-10) {
  if ((b_fixed.array() <= 0.0).any())
    throw std::invalid_argument("solve_convex_subproblem: b_fixed must be positive");
  const auto s = detail::scale_models(models, p_max, gammas, basis_tol);
  const Vec b_scaled = b_fixed / (p_max * s.tau);
  const Vec lin = (b_scaled * kLn2).cwiseInverse();
  sdp::ConicSolver solver;
  const auto res = detail::solve_subproblem_scaled(s, lin, solver, settings);
  const auto out = detail::extract_w(s, res.x);

  SdpSolution sol;
  sol.status = res.status;
  sol.primal_residual = res.primal_residual;
  sol.dual_residual = res.dual_residual;
  sol.inner_iters = res.iters;
  sol.a.resize(s.k);
  sol.b.resize(s.k);
  for (int k = 0; k < s.k; ++k) {
    sol.w_relaxed.push_back(p_max * s.expand(out.w[k]));
    sol.a(k) = out.own(k) * p_max * s.tau;
    sol.b(k) = (out.total(k) - out.own(k) + s.sigma2(k)) * p_max * s.tau;
    sol.objective += std::log2(1.0 + sol.a(k) / sol.b(k));
  }
  return sol;
}

/// SDR-SCA driver: iterates the convex subproblem, re-linearizing the concave
/// interference term at the previous iterate, until the surrogate objective
/// moves less than eps. The reported surrogate includes the linearization
/// constants, so its optimal values are non-decreasing across iterations.
inline SdpSolution solve_sca(const std::vector<CorrelationModel>& models, double p_max,
                             const Vec& gammas, const ScaSettings& settings = {},
                             ScaWorkspace* workspace = nullptr) {
  SdpSolution sol;
  const int k_users = static_cast<int>(models.size());
  if (k_users == 0) throw std::invalid_argument("solve_sca: no users");
  if (p_max <= 0.0) {
    for (const auto& m : models)
      sol.w_relaxed.push_back(CxMat::Zero(m.angle_corr.rows(), m.angle_corr.cols()));
    sol.a = Vec::Zero(k_users);
    sol.b.resize(k_users);
    for (int k = 0; k < k_users; ++k) sol.b(k) = models[k].effective_noise_var;
    sol.status = (gammas.array() > 0.0).any() ? sdp::SolveStatus::kInfeasible
                                              : sdp::SolveStatus::kOptimal;
    return sol;
  }

  const auto s = detail::scale_models(models, p_max, gammas, settings.basis_tol);
  ScaWorkspace local;
  ScaWorkspace& ws = workspace ? *workspace : local;

  // Cheap infeasibility certificate: user k cannot reach gamma_k even with
  // the whole budget on its own principal direction and zero interference.
  for (int k = 0; k < k_users; ++k) {
    Eigen::SelfAdjointEigenSolver<CxMat> es(s.r[k]);
    es.compute(s.r[k], Eigen::EigenvaluesOnly);
    if (es.eigenvalues().maxCoeff() < s.gamma(k) * s.sigma2(k) * (1.0 - 1e-12)) {
      sol.status = sdp::SolveStatus::kInfeasible;
      sol.a = Vec::Zero(k_users);
      sol.b = Vec::Zero(k_users);
      return sol;
    }
  }

  // Feasible start: proportional covariances, else the max-min-slack solution.
  std::vector<CxMat> w0;
  for (int k = 0; k < k_users; ++k)
    w0.push_back(s.r[k] / (static_cast<double>(k_users) * s.r[k].real().trace()));
  auto slack_of = [&](const std::vector<CxMat>& w) {
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < k_users; ++k) {
      double own = (s.r[k] * w[k]).real().trace();
      double mui = 0.0;
      for (int j = 0; j < k_users; ++j)
        if (j != k) mui += (s.r[k] * w[j]).real().trace();
      worst = std::min(worst, own - s.gamma(k) * (mui + s.sigma2(k)));
    }
    return worst;
  };
  if (slack_of(w0) < 0.0) {
    const auto feas = detail::solve_feasibility_scaled(s, settings.inner);
    if (!feas.feasible) {
      sol.status = sdp::SolveStatus::kInfeasible;
      sol.a = Vec::Zero(k_users);
      sol.b = Vec::Zero(k_users);
      return sol;
    }
    w0 = feas.w;
  }

  Vec b_prev(k_users);
  for (int k = 0; k < k_users; ++k) {
    double mui = 0.0;
    for (int j = 0; j < k_users; ++j)
      if (j != k) mui += std::max(0.0, (s.r[k] * w0[j]).real().trace());
    b_prev(k) = mui + s.sigma2(k);
  }

  detail::SubproblemOutputs out;
  double prev_surrogate = 0.0;
  sol.status = sdp::SolveStatus::kMaxIters;
  for (int iter = 1; iter <= settings.max_iters; ++iter) {
    const Vec lin = (b_prev * kLn2).cwiseInverse();
    const auto res = detail::solve_subproblem_scaled(s, lin, ws.solver, settings.inner);
    out = detail::extract_w(s, res.x);
    sol.inner_iters += res.iters;
    sol.primal_residual = res.primal_residual;
    sol.dual_residual = res.dual_residual;

    double surrogate = 0.0, rate = 0.0;
    Vec b_now(k_users);
    for (int k = 0; k < k_users; ++k) {
      const double u = out.total(k) + s.sigma2(k);
      b_now(k) = std::max(out.total(k) - out.own(k) + s.sigma2(k), 1e-300);
      surrogate += std::log2(u) - std::log2(b_prev(k)) -
                   (b_now(k) - b_prev(k)) / (b_prev(k) * kLn2);
      rate += std::log2(1.0 + out.own(k) / b_now(k));
    }
    sol.surrogate_history.push_back(surrogate);
    sol.rate_history.push_back(rate);
    sol.sca_iters = iter;
    b_prev = b_now;
    if (iter >= 2 && std::abs(surrogate - prev_surrogate) <= settings.eps) {
      sol.status = sdp::SolveStatus::kOptimal;
      break;
    }
    prev_surrogate = surrogate;
  }

  sol.a.resize(k_users);
  sol.b.resize(k_users);
  sol.objective = 0.0;
  for (int k = 0; k < k_users; ++k) {
    sol.w_relaxed.push_back(p_max * s.expand(out.w[k]));
    sol.a(k) = out.own(k) * p_max * s.tau;
    sol.b(k) = b_prev(k) * p_max * s.tau;
    sol.objective += std::log2(1.0 + sol.a(k) / sol.b(k));
  }
  return sol;
}

enum class RandomizeStatus { kOk, kNoFeasibleDraw };

struct RandomizationResult {
  CxMat w_columns;  // N x K digital beamformer, power budget met exactly
  double sum_rate = 0.0;
  RandomizeStatus status = RandomizeStatus::kNoFeasibleDraw;
  int feasible_candidates = 0;
};

/// Gaussian randomization to rank one: candidates w_k = factor_k z_k with
/// z ~ CN(0, I), each candidate set rescaled to the exact power budget, kept
/// if it meets the average-SINR constraints; the deterministic
/// principal-eigenvector candidate always competes.
inline RandomizationResult randomize_rank1(const SdpSolution& sol,
                                           const std::vector<CorrelationModel>& models,
                                           double p_max, const Vec& gammas, int n_draws,
                                           uint64_t seed) {
  const int k_users = static_cast<int>(models.size());
  const int n = static_cast<int>(sol.w_relaxed[0].rows());
  std::vector<CxMat> factors;  // factor_k = U sqrt(clamped eigenvalues)
  std::vector<CxVec> principal;
  for (int k = 0; k < k_users; ++k) {
    Eigen::SelfAdjointEigenSolver<CxMat> es(sol.w_relaxed[k]);
    const Vec ev = es.eigenvalues().cwiseMax(0.0);
    factors.push_back(es.eigenvectors() * ev.cwiseSqrt().asDiagonal());
    principal.push_back(es.eigenvectors().col(n - 1) * std::sqrt(ev(n - 1)));
  }

  RandomizationResult best;
  auto consider = [&](CxMat w) {
    const double total = w.squaredNorm();
    if (total <= 0.0) return;
    w *= std::sqrt(p_max / total);
    for (int k = 0; k < k_users; ++k)
      if (average_sinr(w, models, k) < gammas(k) * (1.0 - 1e-9)) return;
    const double rate = average_sum_rate(w, models);
    ++best.feasible_candidates;
    if (best.status == RandomizeStatus::kNoFeasibleDraw || rate > best.sum_rate) {
      best.w_columns = w;
      best.sum_rate = rate;
      best.status = RandomizeStatus::kOk;
    }
  };

  CxMat det(n, k_users);
  for (int k = 0; k < k_users; ++k) det.col(k) = principal[k];
  consider(det);

  auto rng = make_rng(seed, 0xBF);
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  for (int draw = 0; draw < n_draws; ++draw) {
    CxMat w(n, k_users);
    for (int k = 0; k < k_users; ++k) {
      CxVec z(n);
      for (int i = 0; i < n; ++i) z(i) = cxd(g(rng), g(rng));
      w.col(k) = factors[k] * z;
    }
    consider(w);
  }
  return best;
}

/// Hybrid beamformer: constant-modulus analog matrix times a small digital
/// matrix.
struct BeamformerSet {
  CxMat analog;   // N_TX x N_RF, entries of modulus 1/sqrt(N_TX)
  CxMat digital;  // N_RF x K

  CxMat combined() const { return analog * digital; }
};

struct HybridSettings {
  int sweeps = 200;
  double ridge = 1e-8;
  double min_step = 1e-12;
};

struct HybridResult {
  BeamformerSet set;
  std::vector<double> objective_history;  // ||W* - W_rf W_bb||_F per sweep
  double relative_residual = 0.0;
};

/// Alternating minimization of ||W* - W_rf W_bb||_F: ridge least squares for
/// the digital part, projected gradient with per-entry renormalization for
/// the constant-modulus analog part, followed by a power-preserving scale.
inline HybridResult hybrid_factorize(const CxMat& w_star, const UpaConfig& upa, double p_max,
                                     const HybridSettings& settings = {}) {
  const int n = static_cast<int>(w_star.rows());
  const int k = static_cast<int>(w_star.cols());
  const int n_rf = upa.n_rf();
  if (n_rf < k) throw std::invalid_argument("hybrid_factorize: needs N_RF >= K");
  const double cm = 1.0 / std::sqrt(static_cast<double>(n));
  const auto project_cm = [&](const CxMat& m) {
    CxMat out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        const double mag = std::abs(m(i, j));
        out(i, j) = mag > 0.0 ? m(i, j) / mag * cm : cxd(cm, 0.0);
      }
    return out;
  };

  // Deterministic start: phases of the target columns, cycled, with a linear
  // phase ramp decorrelating repeats.
  CxMat w_rf(n, n_rf);
  for (int j = 0; j < n_rf; ++j) {
    const int src = j % k;
    const int rep = j / k;
    for (int i = 0; i < n; ++i) {
      const double base = std::abs(w_star(i, src)) > 0.0 ? std::arg(w_star(i, src)) : 0.0;
      w_rf(i, j) = std::polar(cm, base + 2.0 * kPi * rep * i / n);
    }
  }

  HybridResult result;
  CxMat w_bb;
  const auto lsq_digital = [&]() {
    const CxMat gram = w_rf.adjoint() * w_rf +
                       settings.ridge * CxMat::Identity(n_rf, n_rf);
    w_bb = gram.ldlt().solve(w_rf.adjoint() * w_star);
  };
  lsq_digital();
  double obj = (w_star - w_rf * w_bb).norm();
  for (int sweep = 0; sweep < settings.sweeps; ++sweep) {
    // Analog update: projected gradient with backtracking.
    const CxMat bbh = w_bb * w_bb.adjoint();
    Eigen::SelfAdjointEigenSolver<CxMat> es(bbh);
    double step = 1.0 / std::max(es.eigenvalues().maxCoeff(), 1e-12);
    const CxMat grad = -(w_star - w_rf * w_bb) * w_bb.adjoint();
    while (step > settings.min_step) {
      const CxMat trial = project_cm(w_rf - step * grad);
      if ((w_star - trial * w_bb).norm() <= obj) {
        w_rf = trial;
        break;
      }
      step /= 2.0;
    }
    lsq_digital();
    obj = (w_star - w_rf * w_bb).norm();
    result.objective_history.push_back(obj);
    if (sweep > 2 && result.objective_history.end()[-2] - obj < 1e-12 * (1.0 + obj)) break;
  }

  const double target_norm = std::min(w_star.norm(), std::sqrt(p_max));
  const double current = (w_rf * w_bb).norm();
  if (current > 0.0) w_bb *= target_norm / current;
  result.set.analog = w_rf;
  result.set.digital = w_bb;
  result.relative_residual =
      w_star.norm() > 0.0 ? (w_star - w_rf * w_bb).norm() / w_star.norm() : 0.0;
  return result;
}

/// Normalized transmit pattern of one beam over an angle grid.
struct BeamPattern {
  Mat gain_db;  // n_el x n_az, peak at 0 dB
  double peak_linear = 0.0;
  int peak_az_idx = 0;
  int peak_el_idx = 0;
};

inline BeamPattern beam_pattern(const CxVec& w, const UpaConfig& upa, const RadioConfig& radio,
                                const AngleGrid& grid) {
  const int ne = static_cast<int>(grid.el_rad.size());
  const int na = static_cast<int>(grid.az_rad.size());
  Mat lin(ne, na);
  for (int e = 0; e < ne; ++e)
    for (int a = 0; a < na; ++a) {
      const CxVec steer = steering_vector(upa, radio, grid.el_rad[e], grid.az_rad[a]);
      lin(e, a) = std::norm(steer.dot(w));
    }
  BeamPattern bp;
  Eigen::Index pe, pa;
  bp.peak_linear = lin.maxCoeff(&pe, &pa);
  bp.peak_el_idx = static_cast<int>(pe);
  bp.peak_az_idx = static_cast<int>(pa);
  bp.gain_db = (lin / std::max(bp.peak_linear, 1e-300)).array().max(1e-30).log10() * 10.0;
  return bp;
}

}  // namespace ssbsim

#endif  // SSBSIM_BEAMFORMING_HPP
