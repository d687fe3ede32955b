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

#include "ssbsim/tracker.hpp"

using namespace ssbsim;
using Catch::Approx;

namespace {

Vec6 state(double x, double y, double z, double vx, double vy, double vz) {
  Vec6 s;
  s << x, y, z, vx, vy, vz;
  return s;
}

TrackerConfig default_cfg() {
  TrackerConfig cfg;
  cfg.meas_var = Vec4(1.0, 1.0, deg2rad(0.5) * deg2rad(0.5), deg2rad(0.5) * deg2rad(0.5));
  return cfg;
}

}  // namespace

TEST_CASE("transition matrices at T=1, sigma_a=1") {
  const auto [f, q] = transition_matrices(1.0, 1.0);
  for (int axis = 0; axis < 3; ++axis) {
    REQUIRE(q(axis, axis) == Approx(1.0 / 3.0));
    REQUIRE(q(axis, axis + 3) == Approx(0.5));
    REQUIRE(q(axis + 3, axis) == Approx(0.5));
    REQUIRE(q(axis + 3, axis + 3) == Approx(1.0));
    REQUIRE(f(axis, axis + 3) == Approx(1.0));
  }
  REQUIRE(q(0, 1) == 0.0);
}

TEST_CASE("transition matrices vanish in the zero-step limit") {
  const auto [f, q] = transition_matrices(1e-9, 2.0);
  REQUIRE((f - Mat6::Identity()).norm() < 1e-8);
  REQUIRE(q.norm() < 1e-8);  // leading term is sigma_a^2 T on the velocity block
}

TEST_CASE("transition applied to a unit-velocity state") {
  const auto [f, q] = transition_matrices(0.005, 1.0);
  const Vec6 next = f * state(0, 0, 0, 1, 0, 0);
  REQUIRE(next(0) == Approx(0.005));
  REQUIRE(next(3) == Approx(1.0));
  REQUIRE(next.segment<2>(1).norm() == 0.0);
}

TEST_CASE("measure_fn hand evaluations") {
  const Vec4 m1 = measure_fn(state(100, 0, 0, 0, 0, 0));
  REQUIRE(m1(0) == Approx(100.0));
  REQUIRE(m1(1) == Approx(0.0).margin(1e-15));
  REQUIRE(m1(2) == Approx(0.0).margin(1e-15));
  REQUIRE(m1(3) == Approx(0.0).margin(1e-15));

  const Vec4 m2 = measure_fn(state(0, 100, 0, 0, 10, 0));
  REQUIRE(m2(0) == Approx(100.0));
  REQUIRE(m2(1) == Approx(10.0));
  REQUIRE(m2(2) == Approx(0.0).margin(1e-15));
  REQUIRE(m2(3) == Approx(kPi / 2.0));

  // Maneuver-scenario starting point.
  const Vec4 m3 = measure_fn(state(30, 30, 5, -8, -15, 5));
  const double r = std::sqrt(30.0 * 30 + 30 * 30 + 5 * 5);
  REQUIRE(m3(0) == Approx(r));
  REQUIRE(m3(1) == Approx((30 * -8 + 30 * -15 + 5 * 5) / r));
  REQUIRE(m3(2) == Approx(std::asin(5.0 / r)));
  REQUIRE(m3(3) == Approx(std::atan2(30.0, 30.0)));
}

TEST_CASE("measure_fn rejects singular geometries") {
  REQUIRE_THROWS_AS(measure_fn(state(0, 0, 0, 0, 0, 0)), std::domain_error);
  REQUIRE_THROWS_AS(measure_fn(state(0, 0, 10, 0, 0, 0)), std::domain_error);
}

TEST_CASE("jacobian matches central finite differences on random states") {
  auto rng = make_rng(123, 0);
  std::uniform_real_distribution<double> upos(-200.0, 200.0);
  std::uniform_real_distribution<double> uvel(-30.0, 30.0);
  const double h = 1e-6;
  int tested = 0;
  while (tested < 100) {
    Vec6 s = state(upos(rng), upos(rng), upos(rng), uvel(rng), uvel(rng), uvel(rng));
    const double r = s.head<3>().norm();
    if (r < 20.0 || std::abs(s(2)) / r > 0.95) continue;  // stay off singularities
    const Mat46 g = measurement_jacobian(s);
    for (int col = 0; col < 6; ++col) {
      Vec6 sp = s, sm = s;
      sp(col) += h;
      sm(col) -= h;
      const Vec4 diff = (measure_fn(sp) - measure_fn(sm)) / (2.0 * h);
      for (int row = 0; row < 4; ++row) {
        const double scale = std::max(std::abs(g(row, col)), 1e-3);
        REQUIRE(std::abs(g(row, col) - diff(row)) / scale < 1e-5);
      }
    }
    ++tested;
  }
}

TEST_CASE("jacobian closed form on the x-axis") {
  const Mat46 g = measurement_jacobian(state(50, 0, 0, 3, 0, 0));
  REQUIRE(g(0, 0) == Approx(1.0));
  REQUIRE(g(3, 1) == Approx(1.0 / 50.0));
  // Zero velocity: the radial-velocity row loses its position block.
  const Mat46 g0 = measurement_jacobian(state(50, 10, 5, 0, 0, 0));
  REQUIRE(g0.row(1).head(3).norm() == Approx(0.0).margin(1e-15));
}

TEST_CASE("predict keeps a zero-velocity state in place and grows P") {
  TrackerConfig cfg = default_cfg();
  TrackState t;
  t.s = state(40, 10, 5, 0, 0, 0);
  t.P = Mat6::Identity();
  const double trace_before = t.P.trace();
  predict(t, 0.05, cfg);
  REQUIRE(t.s.head<3>() == Vec3(40, 10, 5));
  REQUIRE(t.P.trace() >= trace_before);
}

TEST_CASE("prediction composes over substeps") {
  TrackerConfig cfg = default_cfg();
  const auto [f1, q1] = transition_matrices(0.005, cfg.sigma_accel);
  const auto [f8, q8] = transition_matrices(0.040, cfg.sigma_accel);
  Mat6 f_comp = Mat6::Identity();
  Mat6 q_comp = Mat6::Zero();
  for (int k = 0; k < 8; ++k) {
    q_comp = f1 * q_comp * f1.transpose() + q1;
    f_comp = f1 * f_comp;
  }
  REQUIRE((f_comp - f8).norm() == 0.0);
  REQUIRE((q_comp - q8).norm() < 1e-9);
}

TEST_CASE("zero innovation leaves the state unchanged and shrinks P") {
  TrackerConfig cfg = default_cfg();
  TrackState t;
  t.s = state(120, 40, 15, -5, 3, 1);
  t.P = 4.0 * Mat6::Identity();
  const Vec6 s_before = t.s;
  const double trace_before = t.P.trace();
  update(t, measure_fn(t.s), cfg);
  REQUIRE((t.s - s_before).norm() < 1e-12);
  REQUIRE(t.P.trace() < trace_before);
  REQUIRE((t.P - t.P.transpose()).norm() < 1e-10);
}

TEST_CASE("update reduces the measurement residual") {
  TrackerConfig cfg = default_cfg();
  TrackState t;
  t.s = state(100, 20, 10, 4, -2, 1);
  t.P = 9.0 * Mat6::Identity();
  // Noiseless measurement of a displaced true state.
  const Vec6 truth = state(104, 18, 11, 4, -2, 1);
  const Vec4 m = measure_fn(truth);
  const double prior_residual = (m - measure_fn(t.s)).norm();
  update(t, m, cfg);
  const double posterior_residual = (m - measure_fn(t.s)).norm();
  REQUIRE(posterior_residual < prior_residual);
}

TEST_CASE("joseph-form update agrees with (I-KG)P on random instances") {
  auto rng = make_rng(321, 0);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Mat a = Mat::NullaryExpr(6, 6, [&](Eigen::Index, Eigen::Index) { return g(rng); });
    Mat p = a * a.transpose() + 0.1 * Mat::Identity(6, 6);
    Mat gm = Mat::NullaryExpr(4, 6, [&](Eigen::Index, Eigen::Index) { return g(rng); });
    Mat r = Mat::Identity(4, 4) * 0.5;
    const Mat s_th = gm * p * gm.transpose() + r;
    const Mat k = p * gm.transpose() * s_th.inverse();

    Vec s = Vec::Zero(6);
    Mat p_joseph = p;
    kalman_update(s, p_joseph, Vec::Zero(4), gm, r);
    const Mat p_plain = (Mat::Identity(6, 6) - k * gm) * p;
    REQUIRE((p_joseph - p_plain).norm() / p_plain.norm() < 1e-8);
  }
}

TEST_CASE("EKF core reduces to a scalar Kalman filter for identity measurements") {
  // 1-D position, identity g: hand-rolled KF vs the shared update core.
  double x = 0.0, p = 4.0;
  Vec s(1);
  s << 0.0;
  Mat pm(1, 1);
  pm << 4.0;
  const double r = 0.25;
  auto rng = make_rng(55, 0);
  std::normal_distribution<double> g;
  for (int step = 0; step < 25; ++step) {
    const double m = 1.0 + g(rng);
    // Hand-rolled scalar KF.
    const double k = p / (p + r);
    x = x + k * (m - x);
    p = (1.0 - k) * p;
    // Shared core.
    Vec innovation(1);
    innovation << m - s(0);
    kalman_update(s, pm, innovation, Mat::Identity(1, 1), r * Mat::Identity(1, 1));
    REQUIRE(std::abs(s(0) - x) < 1e-10);
    REQUIRE(std::abs(pm(0, 0) - p) < 1e-10);
  }
}

TEST_CASE("PSD truncation of a diagonal mismatch") {
  Mat delta = Vec4(1.0, -1.0, 0.0, 0.0).asDiagonal();
  const Mat truncated = detail::psd_truncate(delta);
  REQUIRE((truncated - Mat(Vec4(1.0, 0.0, 0.0, 0.0).asDiagonal())).norm() < 1e-12);
}

TEST_CASE("well-matched model: consistent innovations, bounded bias correction") {
  // NCV truth with process noise matching Q and measurements drawn from Q'.
  // Verified properties: the filter is statistically consistent (mean NIS ~ 4,
  // S_emp tracks S_th), and the PSD-truncated correction stays within the
  // finite-window sampling envelope. With J buffered innovations the sample
  // covariance carries Marchenko-Pastur edge fluctuations of order
  // (1+sqrt(4/J))^2 - 1 that the truncation rectifies, so the matched-model
  // bias has a structural floor well above zero; the envelope below is the
  // Monte-Carlo-calibrated value for this regime.
  TrackerConfig cfg = default_cfg();
  cfg.sigma_accel = 6.0;
  cfg.innovation_window = 32;
  auto rng = make_rng(777, 0);
  std::normal_distribution<double> g;

  Vec6 truth = state(150, 80, 30, -6, 4, 1);
  TrackState t;
  t.s = truth;
  t.P = Mat6::Identity();
  const double dt = 0.1;
  const auto [f, q] = transition_matrices(dt, cfg.sigma_accel);
  const Eigen::LLT<Mat6> chol(q + 1e-12 * Mat6::Identity());
  double ratio_acc = 0.0, nis_acc = 0.0, emp_over_th = 0.0;
  int steps = 0;
  for (int step = 0; step < 260; ++step) {
    Vec6 w;
    for (int i = 0; i < 6; ++i) w(i) = g(rng);
    truth = f * truth + chol.matrixL() * w;
    predict(t, dt, cfg);
    Vec4 noise;
    for (int i = 0; i < 4; ++i) noise(i) = g(rng) * std::sqrt(cfg.meas_var(i));
    const Vec4 m = measure_fn(truth) + noise;
    if (step >= 60) {
      const Vec4 nu = m - measure_fn(t.s);
      const Mat46 gj = measurement_jacobian(t.s);
      const Eigen::Matrix4d s_th =
          gj * t.P * gj.transpose() + Eigen::Matrix4d(cfg.meas_var.asDiagonal());
      nis_acc += nu.transpose() * s_th.inverse() * nu;
      Eigen::Matrix4d s_emp = Eigen::Matrix4d::Zero();
      for (const auto& v : t.innovations) s_emp += v * v.transpose();
      s_emp /= static_cast<double>(t.innovations.size());
      emp_over_th += (s_th.inverse() * s_emp).trace() / 4.0;
    }
    update(t, m, cfg);
    if (step >= 60) {
      ratio_acc += (t.P_corrected - t.P).norm() / t.P.norm();
      ++steps;
    }
  }
  REQUIRE(nis_acc / steps == Approx(4.0).margin(0.5));
  REQUIRE(emp_over_th / steps == Approx(1.0).margin(0.15));
  REQUIRE(ratio_acc / steps < 1.5);
}

TEST_CASE("maneuver inflates the corrected covariance") {
  // Replay of the maneuvering trajectory: straight, then accelerating
  // (8, 8, -2) m/s^2 during t in [1, 2], then straight again.
  TrackerConfig cfg = default_cfg();
  cfg.sigma_accel = 8.0;
  auto rng = make_rng(2024, 0);
  std::normal_distribution<double> g;

  Vec3 pos(30, 30, 5), vel(-8, -15, 5);
  TrackState t;
  t.s << pos, vel;
  t.P = Mat6::Identity();
  const double dt = 0.04;
  bool saw_positive_bias_in_window = false;
  for (int step = 1; step <= 100; ++step) {
    const double time = step * dt;
    const Vec3 accel = (time > 1.0 && time <= 2.0) ? Vec3(8, 8, -2) : Vec3::Zero();
    pos += vel * dt + 0.5 * accel * dt * dt;
    vel += accel * dt;
    predict(t, dt, cfg);
    Vec6 truth;
    truth << pos, vel;
    Vec4 noise;
    for (int i = 0; i < 4; ++i) noise(i) = g(rng) * std::sqrt(cfg.meas_var(i));
    update(t, measure_fn(truth) + noise, cfg);
    // PSD bias: corrected trace never falls below the EKF trace.
    REQUIRE(t.P_corrected.trace() >= t.P.trace() - 1e-9);
    if (time > 1.2 && time <= 2.5 && (t.P_corrected - t.P).trace() > 1e-6)
      saw_positive_bias_in_window = true;
  }
  REQUIRE(saw_positive_bias_in_window);
}

TEST_CASE("predicted parameter variances") {
  TrackState t;
  t.s = state(100, 0, 0, 0, 0, 0);
  t.P_corrected = Mat6::Zero();
  auto p0 = predicted_params(t);
  REQUIRE(p0.sigma_r == 0.0);
  REQUIRE(p0.sigma_el == 0.0);
  REQUIRE(p0.sigma_az == 0.0);

  t.P_corrected = Mat6::Identity();
  const auto p1 = predicted_params(t);
  REQUIRE(p1.range_m == Approx(100.0));
  REQUIRE(p1.sigma_r == Approx(1.0));
  REQUIRE(p1.sigma_az == Approx(1.0 / 100.0));
}

TEST_CASE("predicted sigmas match Monte-Carlo propagation for small covariance") {
  TrackState t;
  t.s = state(120, 60, 25, -5, 2, 1);
  Mat6 p = Mat6::Zero();
  p.diagonal() << 0.25, 0.25, 0.25, 0.04, 0.04, 0.04;
  t.P_corrected = p;
  const auto pred = predicted_params(t);

  auto rng = make_rng(909, 0);
  std::normal_distribution<double> g;
  const int n = 100000;
  double sr = 0, sel = 0, saz = 0, mr = 0, mel = 0, maz = 0;
  std::vector<Vec4> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec6 s = t.s;
    for (int d = 0; d < 6; ++d) s(d) += g(rng) * std::sqrt(p(d, d));
    samples.push_back(measure_fn(s));
    mr += samples.back()(0);
    mel += samples.back()(2);
    maz += samples.back()(3);
  }
  mr /= n;
  mel /= n;
  maz /= n;
  for (const auto& m : samples) {
    sr += (m(0) - mr) * (m(0) - mr);
    sel += (m(2) - mel) * (m(2) - mel);
    saz += (m(3) - maz) * (m(3) - maz);
  }
  REQUIRE(pred.sigma_r == Approx(std::sqrt(sr / n)).epsilon(0.10));
  REQUIRE(pred.sigma_el == Approx(std::sqrt(sel / n)).epsilon(0.10));
  REQUIRE(pred.sigma_az == Approx(std::sqrt(saz / n)).epsilon(0.10));
}

TEST_CASE("association assigns an in-gate measurement") {
  TrackerConfig cfg = default_cfg();
  TrackState t = make_track(Vec4(100, 5, 0.1, 0.2), cfg, 0.0, 0);
  const Vec4 close = measure_fn(t.s) + Vec4(0.5, 0.2, 0.001, 0.001);
  const auto assoc = associate({t}, {close}, cfg);
  REQUIRE(assoc.pairs.size() == 1);
  REQUIRE(assoc.unassigned_measurements.empty());
}

TEST_CASE("out-of-gate measurement spawns a new track") {
  TrackerConfig cfg = default_cfg();
  Tracker tracker(cfg);
  tracker.measurement_burst({Measurement{100.0, 5.0, 0.1, 0.2, 1.0, 1.0}}, 0.0);
  REQUIRE(tracker.tracks().size() == 1);
  // Mahalanobis^2 = 20 in the range coordinate alone (sigma_r = 1, P small).
  tracker.tracks()[0].P *= 1e-12;
  Measurement far{100.0 + std::sqrt(20.0), 5.0, 0.1, 0.2, 1.0, 1.0};
  tracker.measurement_burst({far}, 1.0);
  REQUIRE(tracker.tracks().size() == 2);
}

TEST_CASE("greedy association takes the globally smallest pair first") {
  TrackerConfig cfg = default_cfg();
  cfg.gate_mahalanobis2 = 30.0;
  // Distances (sigma_r = 1, P ~ 0): d(A,m1)=0.81, d(A,m2)=4, d(B,m1)=1.21,
  // d(B,m2)=16. Greedy picks (A,m1) then (B,m2); the optimal assignment would
  // cross to (A,m2) + (B,m1).
  TrackState a = make_track(Vec4(100, 0, 0.3, 0.4), cfg, 0, 0);
  TrackState b = make_track(Vec4(102, 0, 0.3, 0.4), cfg, 0, 1);
  a.P = 1e-12 * Mat6::Identity();
  b.P = 1e-12 * Mat6::Identity();
  const Vec4 m1 = Vec4(100.9, 0, 0.3, 0.4);
  const Vec4 m2 = Vec4(98.0, 0, 0.3, 0.4);
  const auto assoc = associate({a, b}, {m1, m2}, cfg);
  REQUIRE(assoc.pairs.size() == 2);
  REQUIRE(assoc.pairs[0] == std::make_pair(0, 0));
  REQUIRE(assoc.pairs[1] == std::make_pair(1, 1));
}

TEST_CASE("stale tracks are dropped after too many missed bursts") {
  TrackerConfig cfg = default_cfg();
  Tracker tracker(cfg);
  tracker.measurement_burst({Measurement{80.0, 3.0, 0.2, 0.1, 1.0, 1.0}}, 0.0);
  REQUIRE(tracker.tracks().size() == 1);
  for (int burst = 0; burst < 3; ++burst) tracker.measurement_burst({}, 1.0 + burst);
  REQUIRE(tracker.tracks().size() == 1);
  tracker.measurement_burst({}, 5.0);
  REQUIRE(tracker.tracks().empty());
}

TEST_CASE("config validation enforces the practical acceleration range") {
  TrackerConfig cfg = default_cfg();
  cfg.max_accel = 11.5;
  cfg.sigma_accel = 8.0;
  REQUIRE_NOTHROW(cfg.validate());
  cfg.sigma_accel = 2.0;  // below 0.5 a_M
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.sigma_accel = 20.0;  // above a_M
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("covariances stay symmetric PSD through a random filter run") {
  TrackerConfig cfg = default_cfg();
  auto rng = make_rng(4242, 0);
  std::normal_distribution<double> g;
  TrackState t = make_track(Vec4(90, -4, 0.15, -0.3), cfg, 0.0, 0);
  for (int step = 0; step < 50; ++step) {
    predict(t, 0.02, cfg);
    Vec4 m = measure_fn(t.s);
    for (int i = 0; i < 4; ++i) m(i) += 0.3 * g(rng) * std::sqrt(cfg.meas_var(i));
    update(t, m, cfg);
    for (const Mat6& p : {t.P, t.P_corrected}) {
      REQUIRE((p - p.transpose()).norm() < 1e-10);
      Eigen::SelfAdjointEigenSolver<Mat6> es(p);
      REQUIRE(es.eigenvalues().minCoeff() > -1e-9);
    }
  }
}
