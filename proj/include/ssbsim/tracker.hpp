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

#ifndef SSBSIM_TRACKER_HPP
#define SSBSIM_TRACKER_HPP

#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>

#include "ssbsim/common.hpp"
#include "ssbsim/sensing.hpp"

namespace ssbsim {

/// NCV transition matrix F and discrete white-noise-acceleration covariance Q
/// for a step of dt seconds.
inline std::pair<Mat6, Mat6> transition_matrices(double dt, double sigma_accel) {
  if (dt <= 0.0) throw std::invalid_argument("transition_matrices: dt must be > 0");
  Mat6 f = Mat6::Identity();
  f.topRightCorner<3, 3>() = dt * Eigen::Matrix3d::Identity();
  Mat6 q = Mat6::Zero();
  const double s2 = sigma_accel * sigma_accel;
  q.topLeftCorner<3, 3>() = (s2 * dt * dt * dt / 3.0) * Eigen::Matrix3d::Identity();
  q.topRightCorner<3, 3>() = (s2 * dt * dt / 2.0) * Eigen::Matrix3d::Identity();
  q.bottomLeftCorner<3, 3>() = q.topRightCorner<3, 3>();
  q.bottomRightCorner<3, 3>() = (s2 * dt) * Eigen::Matrix3d::Identity();
  return {f, q};
}

/// Spherical measurement function g(s) = (range, radial velocity, elevation,
/// azimuth) of the state [x, y, z, vx, vy, vz].
inline Vec4 measure_fn(const Vec6& s) {
  const double r = s.head<3>().norm();
  if (r <= 0.0) throw std::domain_error("measure_fn: state at the origin");
  const double z = s(2);
  if (r * r - z * z <= 0.0)
    throw std::domain_error("measure_fn: state on the vertical axis (singular elevation)");
  Vec4 m;
  m(0) = r;
  m(1) = s.head<3>().dot(s.tail<3>()) / r;
  m(2) = std::asin(z / r);
  m(3) = std::atan2(s(1), s(0));
  return m;
}

/// Closed-form 4x6 Jacobian of measure_fn.
inline Mat46 measurement_jacobian(const Vec6& s) {
  const double x = s(0), y = s(1), z = s(2);
  const double vx = s(3), vy = s(4), vz = s(5);
  const double r2 = x * x + y * y + z * z;
  const double r = std::sqrt(r2);
  if (r <= 0.0) throw std::domain_error("measurement_jacobian: state at the origin");
  const double horiz2 = r2 - z * z;
  if (horiz2 <= 0.0) throw std::domain_error("measurement_jacobian: singular elevation");
  const double t = x * vx + y * vy + z * vz;
  const double r3 = r2 * r;
  const double sh = std::sqrt(horiz2);
  Mat46 g = Mat46::Zero();
  g(0, 0) = x / r;
  g(0, 1) = y / r;
  g(0, 2) = z / r;
  g(1, 0) = vx / r - t * x / r3;
  g(1, 1) = vy / r - t * y / r3;
  g(1, 2) = vz / r - t * z / r3;
  g(1, 3) = x / r;
  g(1, 4) = y / r;
  g(1, 5) = z / r;
  g(2, 0) = -z * x / (r2 * sh);
  g(2, 1) = -z * y / (r2 * sh);
  g(2, 2) = sh / r2;
  g(3, 0) = -y / (x * x + y * y);
  g(3, 1) = x / (x * x + y * y);
  return g;
}

struct TrackerConfig {
  double sigma_accel = 8.0;  // m/s^2
  // Measurement covariance Q' diagonal: (sigma_r^2, sigma_v^2, sigma_el^2, sigma_az^2).
  Vec4 meas_var = Vec4(1.0, 1.0, deg2rad(0.5) * deg2rad(0.5), deg2rad(0.5) * deg2rad(0.5));
  int innovation_window = 8;                       // J
  double gate_mahalanobis2 = 13.28;                // chi^2(4 dof, 99%)
  int max_missed_bursts = 3;
  double init_velocity_std = 10.0;                 // m/s
  std::optional<double> max_accel;                 // a_M, validates sigma_accel when set

  Mat meas_cov() const { return meas_var.asDiagonal(); }

  void validate() const {
    if (sigma_accel <= 0.0 || (meas_var.array() <= 0.0).any())
      throw std::invalid_argument("TrackerConfig: variances must be > 0");
    if (max_accel && !(0.5 * *max_accel <= sigma_accel && sigma_accel <= *max_accel))
      throw std::invalid_argument(
          "TrackerConfig: sigma_accel outside the practical range [0.5 a_M, a_M]");
    if (innovation_window < 1)
      throw std::invalid_argument("TrackerConfig: innovation window must be >= 1");
  }
};

/// One EKF track: state, covariances, and the innovation history that drives
/// the model-mismatch correction.
struct TrackState {
  Vec6 s = Vec6::Zero();
  Mat6 P = Mat6::Identity();
  Mat6 P_corrected = Mat6::Identity();
  std::deque<Vec4> innovations;  // newest at the back, length <= J
  double last_update_time = 0.0;
  int id = 0;
  int missed_bursts = 0;
  int updates = 0;  // confirmation count
  bool correction_fallback = false;  // set when G G^T was singular
};

namespace detail {

inline Mat6 symmetrize(const Mat6& p) { return (p + p.transpose()) / 2.0; }

inline Mat psd_truncate(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

/// Innovation-driven covariance correction:
///   S_emp = mean of nu nu^T over the buffered innovations,
///   S_th  = G P G^T + Q',
///   P_bias = G^+ [S_emp - S_th]_+ (G^+)^T,  P_corrected = P + P_bias.
/// With zero_meas_cov the theoretical covariance uses Q' = 0 (prediction-time
/// uncertainty). Falls back to P_corrected = P when the buffer is empty or
/// G G^T is singular.
inline void correct_covariance(TrackState& t, const TrackerConfig& cfg, bool zero_meas_cov) {
  t.correction_fallback = false;
  if (t.innovations.empty()) {
    t.P_corrected = t.P;
    return;
  }
  Eigen::Matrix4d s_emp = Eigen::Matrix4d::Zero();
  for (const auto& nu : t.innovations) s_emp += nu * nu.transpose();
  s_emp /= static_cast<double>(t.innovations.size());

  Mat46 g;
  try {
    g = measurement_jacobian(t.s);
  } catch (const std::domain_error&) {
    t.P_corrected = t.P;
    t.correction_fallback = true;
    return;
  }
  Eigen::Matrix4d s_th = g * t.P * g.transpose();
  if (!zero_meas_cov) s_th += Eigen::Matrix4d(cfg.meas_var.asDiagonal());

  const Mat delta = detail::psd_truncate(s_emp - s_th);

  const Eigen::Matrix4d ggt = g * g.transpose();
  Eigen::FullPivLU<Eigen::Matrix4d> lu(ggt);
  if (!lu.isInvertible()) {
    t.P_corrected = t.P;
    t.correction_fallback = true;
    return;
  }
  const Eigen::Matrix<double, 6, 4> g_pinv = g.transpose() * lu.inverse();
  const Mat6 p_bias = g_pinv * delta * g_pinv.transpose();
  t.P_corrected = detail::symmetrize(t.P + p_bias);
}

/// EKF prediction: s <- F s, P <- F P F^T + Q; the corrected covariance is
/// refreshed with Q' = 0 so predicted-parameter uncertainties reflect the
/// prediction step.
inline void predict(TrackState& t, double dt, const TrackerConfig& cfg) {
  const auto [f, q] = transition_matrices(dt, cfg.sigma_accel);
  t.s = f * t.s;
  t.P = detail::symmetrize(f * t.P * f.transpose() + q);
  correct_covariance(t, cfg, /*zero_meas_cov=*/true);
}

// Generic Kalman measurement update in Joseph form; innovation is m - g(s).
inline void kalman_update(Eigen::Ref<Eigen::VectorXd> s, Eigen::Ref<Mat> p,
                          const Vec& innovation, const Mat& g, const Mat& r) {
  const Mat s_th = g * p * g.transpose() + r;
  const Mat k = p * g.transpose() * s_th.llt().solve(Mat::Identity(r.rows(), r.cols()));
  s += k * innovation;
  const Mat ikg = Mat::Identity(p.rows(), p.cols()) - k * g;
  p = ikg * p * ikg.transpose() + k * r * k.transpose();
  p = (p + p.transpose()) / 2.0;
}

/// EKF measurement update with the spherical model. Angle innovations are
/// wrapped to (-pi, pi] before use and buffering.
inline void update(TrackState& t, const Vec4& m, const TrackerConfig& cfg, double time = 0.0) {
  const Vec4 predicted = measure_fn(t.s);
  Vec4 nu = m - predicted;
  nu(2) = wrap_angle(nu(2));
  nu(3) = wrap_angle(nu(3));
  const Mat46 g = measurement_jacobian(t.s);

  Vec s_dyn = t.s;
  Mat p_dyn = t.P;
  kalman_update(s_dyn, p_dyn, nu, g, cfg.meas_cov());
  t.s = s_dyn;
  t.P = detail::symmetrize(p_dyn);

  t.innovations.push_back(nu);
  while (static_cast<int>(t.innovations.size()) > cfg.innovation_window)
    t.innovations.pop_front();
  t.last_update_time = time;
  t.missed_bursts = 0;
  ++t.updates;
  correct_covariance(t, cfg, /*zero_meas_cov=*/false);
}

/// Nominal spherical parameters and their standard deviations from the
/// corrected covariance, via first-order propagation with the Jacobian rows
/// for range, elevation, and azimuth.
struct PredictedParams {
  double range_m = 0.0;
  double elevation_rad = 0.0;
  double azimuth_rad = 0.0;
  double sigma_r = 0.0;
  double sigma_el = 0.0;
  double sigma_az = 0.0;
};

inline PredictedParams predicted_params(const TrackState& t) {
  const Vec4 nominal = measure_fn(t.s);
  const Mat46 g = measurement_jacobian(t.s);
  PredictedParams p;
  p.range_m = nominal(0);
  p.elevation_rad = nominal(2);
  p.azimuth_rad = nominal(3);
  const auto quad = [&](int row) {
    const Vec6 gr = g.row(row).transpose();
    return std::sqrt(std::max(0.0, double(gr.transpose() * t.P_corrected * gr)));
  };
  p.sigma_r = quad(0);
  p.sigma_el = quad(2);
  p.sigma_az = quad(3);
  return p;
}

/// Spherical inversion of the first measurement; velocity starts along the
/// line of sight at the measured radial speed. Position covariance comes from
/// the measurement geometry, velocity from init_velocity_std.
inline TrackState make_track(const Vec4& m, const TrackerConfig& cfg, double time, int id) {
  TrackState t;
  const double r = m(0), v = m(1), el = m(2), az = m(3);
  if (r <= 0.0) throw std::domain_error("make_track: measured range must be > 0");
  const Vec3 u(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
  t.s.head<3>() = r * u;
  t.s.tail<3>() = v * u;
  // d(position)/d(r, el, az) at the measurement.
  Eigen::Matrix3d j;
  j.col(0) = u;
  j.col(1) = r * Vec3(-std::sin(el) * std::cos(az), -std::sin(el) * std::sin(az), std::cos(el));
  j.col(2) = r * Vec3(-std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), 0.0);
  const Eigen::Matrix3d meas_pos =
      Vec3(cfg.meas_var(0), cfg.meas_var(2), cfg.meas_var(3)).asDiagonal();
  t.P = Mat6::Zero();
  t.P.topLeftCorner<3, 3>() = j * meas_pos * j.transpose();
  t.P.bottomRightCorner<3, 3>() =
      cfg.init_velocity_std * cfg.init_velocity_std * Eigen::Matrix3d::Identity();
  t.P = detail::symmetrize(t.P);
  t.P_corrected = t.P;
  t.last_update_time = time;
  t.id = id;
  return t;
}

/// Greedy nearest-neighbor assignment on the gated Mahalanobis distance
/// nu^T S_th^{-1} nu (S_th = G P G^T + Q' at each track's current state).
/// Greedy, not optimal: pairs are taken globally smallest first.
struct Association {
  std::vector<std::pair<int, int>> pairs;      // (track index, measurement index)
  std::vector<int> unassigned_measurements;
  std::vector<int> unmatched_tracks;
};

inline Association associate(const std::vector<TrackState>& tracks,
                             const std::vector<Vec4>& measurements, const TrackerConfig& cfg) {
  const int nt = static_cast<int>(tracks.size());
  const int nm = static_cast<int>(measurements.size());
  Mat dist = Mat::Constant(nt, nm, std::numeric_limits<double>::infinity());
  for (int i = 0; i < nt; ++i) {
    Vec4 predicted;
    Mat46 g;
    try {
      predicted = measure_fn(tracks[i].s);
      g = measurement_jacobian(tracks[i].s);
    } catch (const std::domain_error&) {
      continue;  // singular geometry: track cannot gate anything this burst
    }
    const Eigen::Matrix4d s_th =
        g * tracks[i].P * g.transpose() + Eigen::Matrix4d(cfg.meas_var.asDiagonal());
    const Eigen::Matrix4d s_inv = s_th.inverse();
    for (int j = 0; j < nm; ++j) {
      Vec4 nu = measurements[j] - predicted;
      nu(2) = wrap_angle(nu(2));
      nu(3) = wrap_angle(nu(3));
      dist(i, j) = nu.transpose() * s_inv * nu;
    }
  }

  Association out;
  std::vector<bool> track_used(nt, false), meas_used(nm, false);
  while (true) {
    double best = cfg.gate_mahalanobis2;
    int bi = -1, bj = -1;
    for (int i = 0; i < nt; ++i) {
      if (track_used[i]) continue;
      for (int j = 0; j < nm; ++j) {
        if (meas_used[j]) continue;
        if (dist(i, j) <= best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0) break;
    track_used[bi] = true;
    meas_used[bj] = true;
    out.pairs.push_back({bi, bj});
  }
  for (int j = 0; j < nm; ++j)
    if (!meas_used[j]) out.unassigned_measurements.push_back(j);
  for (int i = 0; i < nt; ++i)
    if (!track_used[i]) out.unmatched_tracks.push_back(i);
  return out;
}

/// Multi-target track manager: gated association, per-track EKF updates, new
/// track spawning, and dropping tracks unmatched for more than
/// max_missed_bursts bursts.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const TrackerConfig& config() const { return cfg_; }
  std::vector<TrackState>& tracks() { return tracks_; }
  const std::vector<TrackState>& tracks() const { return tracks_; }

  void predict_all(double dt) {
    for (auto& t : tracks_) predict(t, dt, cfg_);
  }

  /// One measurement burst: associate, update matched tracks, spawn tracks
  /// from unassigned measurements, drop stale tracks. Degenerate measurements
  /// or states (singular geometry) cost a miss instead of aborting the burst.
  /// A track only accrues misses while expects_measurement holds (e.g. its
  /// prediction lies inside the swept sector); outside it coasts.
  void measurement_burst(const std::vector<Measurement>& measurements, double time,
                         const std::function<bool(const TrackState&)>& expects_measurement =
                             {}) {
    std::vector<Vec4> m;
    m.reserve(measurements.size());
    for (const auto& meas : measurements) m.push_back(meas.vector());
    const Association assoc = associate(tracks_, m, cfg_);
    for (const auto& [ti, mi] : assoc.pairs) {
      try {
        update(tracks_[ti], m[mi], cfg_, time);
      } catch (const std::domain_error&) {
        ++tracks_[ti].missed_bursts;
      }
    }
    for (int i : assoc.unmatched_tracks)
      if (!expects_measurement || expects_measurement(tracks_[i])) ++tracks_[i].missed_bursts;
    for (int j : assoc.unassigned_measurements) {
      try {
        tracks_.push_back(make_track(m[j], cfg_, time, next_id_));
        ++next_id_;
      } catch (const std::domain_error&) {
      }
    }
    std::erase_if(tracks_, [&](const TrackState& t) {
      return t.missed_bursts > cfg_.max_missed_bursts;
    });
  }

 private:
  TrackerConfig cfg_;
  std::vector<TrackState> tracks_;
  int next_id_ = 0;
};

}  // namespace ssbsim

#endif  // SSBSIM_TRACKER_HPP
