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

#ifndef SSBSIM_SCENARIO_HPP
#define SSBSIM_SCENARIO_HPP

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "ssbsim/beamforming.hpp"
#include "ssbsim/radio.hpp"
#include "ssbsim/sensing.hpp"
#include "ssbsim/tracker.hpp"

namespace ssbsim {

/// Flat "key = value" configuration with dotted section names and '#'
/// comments. Values are scalars or whitespace-separated tuples.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
  }

  static KeyValueConfig from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw std::runtime_error("config line " + std::to_string(line_no) +
                                   ": expected 'key = value'");
        continue;
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw std::runtime_error("config line " + std::to_string(line_no) +
                                                ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double get_double(const std::string& key, std::optional<double> fallback = {}) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      if (fallback) return *fallback;
      throw std::runtime_error("missing config key: " + key);
    }
    return std::stod(it->second);
  }

  int get_int(const std::string& key, std::optional<int> fallback = {}) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      if (fallback) return *fallback;
      throw std::runtime_error("missing config key: " + key);
    }
    return std::stoi(it->second);
  }

  uint64_t get_u64(const std::string& key, std::optional<uint64_t> fallback = {}) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      if (fallback) return *fallback;
      throw std::runtime_error("missing config key: " + key);
    }
    return std::stoull(it->second);
  }

  Vec get_tuple(const std::string& key, int expected) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("missing config key: " + key);
    std::istringstream in(it->second);
    Vec v(expected);
    for (int i = 0; i < expected; ++i)
      if (!(in >> v(i)))
        throw std::runtime_error("config key " + key + ": expected " +
                                 std::to_string(expected) + " numbers");
    return v;
  }

 private:
  std::map<std::string, std::string> values_;
};

/// One constant-acceleration interval of a trajectory.
struct ManeuverSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  Vec3 accel = Vec3::Zero();
};

struct UavScenario {
  Vec3 position0 = Vec3::Zero();
  Vec3 velocity0 = Vec3::Zero();
  double rcs = 1.0;
  std::vector<ManeuverSegment> maneuvers;
};

struct BaselineConfig {
  double refine_interval_s = 10e-3;
  int n_refine_beams = 4;
};

/// Everything one simulation run needs.
struct ScenarioConfig {
  RadioConfig radio;
  UpaConfig tx_upa;
  UpaConfig rx_upa;
  double sweep_az_min = deg2rad(-60.0), sweep_az_max = deg2rad(60.0);
  double sweep_el_min = deg2rad(0.0), sweep_el_max = deg2rad(45.0);
  int sweep_n_az = 16, sweep_n_el = 4;

  double horizon_s = 4.0;
  double burst_period_s = 40e-3;  // T
  double kf_period_s = 5e-3;      // T_KF
  double p_max_w = 0.01;
  uint64_t seed = 1;

  SensingConfig sensing;
  double music_grid_step_rad = deg2rad(1.0);
  double merge_angle_rad = deg2rad(6.0);  // cross-beam duplicate clustering
  TrackerConfig tracker;
  bool tracker_meas_var_from_bins = true;

  double gamma_db = 10.0;
  double comm_noise_var = 1e-12;
  int randomization_draws = 100;
  ScaSettings sca;
  HybridSettings hybrid;

  BaselineConfig baseline;
  BaselineConfig baseline_dense{5e-3, 64};

  std::vector<UavScenario> uavs;

  double search_az_pad = deg2rad(15.0);
  double search_el_pad = deg2rad(25.0);

  SweepPlan sweep_plan() const {
    return build_sweep_plan(sweep_az_min, sweep_az_max, sweep_el_min, sweep_el_max, sweep_n_az,
                            sweep_n_el, burst_period_s);
  }
  // The angle search region extends past the swept sector: the wide boundary
  // beams still illuminate beyond it, so targets there remain measurable.
  AngleGrid music_grid() const {
    const double az_lo = std::max(sweep_az_min - search_az_pad, deg2rad(-85.0));
    const double az_hi = std::min(sweep_az_max + search_az_pad, deg2rad(85.0));
    const double el_hi = std::min(sweep_el_max + search_el_pad, deg2rad(80.0));
    return AngleGrid::uniform(az_lo, az_hi, sweep_el_min, el_hi, music_grid_step_rad);
  }
  double gamma_linear() const { return db2lin(gamma_db); }

  void validate() const {
    radio.validate();
    tx_upa.validate();
    rx_upa.validate();
    if (uavs.empty()) throw std::invalid_argument("scenario: needs at least one uav.*");
    if (horizon_s < burst_period_s)
      throw std::invalid_argument("scenario: horizon shorter than the SS burst period");
    const double ratio = burst_period_s / kf_period_s;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
      throw std::invalid_argument("scenario: burst period must be a multiple of the KF period");
    for (const auto& u : uavs)
      for (const auto& m : u.maneuvers) {
        if (m.t_end < m.t_start || m.t_end > horizon_s)
          throw std::invalid_argument("scenario: maneuver segment outside the horizon");
      }
  }

  static ScenarioConfig from_config(const KeyValueConfig& kv) {
    ScenarioConfig sc;
    sc.radio.fc_hz = kv.get_double("radio.fc_hz", 28e9);
    sc.radio.delta_f_hz = kv.get_double("radio.delta_f_hz", 120e3);
    sc.radio.symbol_s = kv.get_double("radio.symbol_s", 8.9e-6);

    auto upa = [&](const std::string& side) {
      return UpaConfig::make(kv.get_int("array." + side + ".n_y", 8),
                             kv.get_int("array." + side + ".n_z", 4),
                             kv.get_int("array." + side + ".n_rf_y", 4),
                             kv.get_int("array." + side + ".n_rf_z", 2), sc.radio);
    };
    sc.tx_upa = upa("tx");
    sc.rx_upa = upa("rx");

    sc.sweep_az_min = deg2rad(kv.get_double("sweep.az_min_deg", -60.0));
    sc.sweep_az_max = deg2rad(kv.get_double("sweep.az_max_deg", 60.0));
    sc.sweep_el_min = deg2rad(kv.get_double("sweep.el_min_deg", 0.0));
    sc.sweep_el_max = deg2rad(kv.get_double("sweep.el_max_deg", 45.0));
    sc.sweep_n_az = kv.get_int("sweep.n_az", 16);
    sc.sweep_n_el = kv.get_int("sweep.n_el", 4);

    sc.horizon_s = kv.get_double("sim.horizon_s", 4.0);
    sc.burst_period_s = kv.get_double("sim.burst_period_s", 40e-3);
    sc.kf_period_s = kv.get_double("sim.kf_period_s", 5e-3);
    sc.p_max_w = kv.get_double("sim.p_max_w", 0.01);
    sc.seed = kv.get_u64("sim.seed", 1);

    sc.sensing.n_idft = kv.get_int("sensing.n_idft", 256);
    sc.sensing.m_dft = kv.get_int("sensing.m_dft", 256);
    sc.sensing.window_radius = kv.get_int("sensing.w_r", 2);
    sc.sensing.noise_power = kv.get_double("sensing.noise_power", 1e-13);
    sc.sensing.detector.threshold_over_median_db = kv.get_double("sensing.threshold_db", 13.0);
    sc.sensing.detector.max_targets = kv.get_int("sensing.max_targets", 8);
    sc.sensing.detector.delay_guard = kv.get_int("sensing.delay_guard", 1);
    sc.sensing.detector.doppler_guard = kv.get_int("sensing.doppler_guard", -1);
    sc.sensing.music_eigengap = kv.get_double("sensing.music_eigengap", 0.01);
    sc.sensing.n_sources_override = kv.get_int("sensing.n_sources", -1);
    sc.sensing.music_peak_min = kv.get_double("sensing.music_peak_min", 10.0);
    sc.sensing.sector_slack_cells = kv.get_double("sensing.sector_slack_cells", 0.5);
    sc.music_grid_step_rad = deg2rad(kv.get_double("sensing.grid_step_deg", 1.0));
    sc.merge_angle_rad = deg2rad(kv.get_double("sensing.merge_angle_deg", 6.0));
    sc.search_az_pad = deg2rad(kv.get_double("sensing.search_az_pad_deg", 15.0));
    sc.search_el_pad = deg2rad(kv.get_double("sensing.search_el_pad_deg", 25.0));

    sc.tracker.sigma_accel = kv.get_double("tracker.sigma_accel", 8.0);
    if (kv.has("tracker.max_accel")) sc.tracker.max_accel = kv.get_double("tracker.max_accel");
    sc.tracker.innovation_window = kv.get_int("tracker.window", 8);
    sc.tracker.gate_mahalanobis2 = kv.get_double("tracker.gate", 13.28);
    sc.tracker.max_missed_bursts = kv.get_int("tracker.max_missed", 3);
    sc.tracker.init_velocity_std = kv.get_double("tracker.init_velocity_std", 10.0);
    if (kv.has("tracker.sigma_r")) {
      sc.tracker_meas_var_from_bins = false;
      const double sr = kv.get_double("tracker.sigma_r");
      const double sv = kv.get_double("tracker.sigma_v");
      const double sa = deg2rad(kv.get_double("tracker.sigma_angle_deg", 0.5));
      sc.tracker.meas_var = Vec4(sr * sr, sv * sv, sa * sa, sa * sa);
    } else {
      // Defaults derived from the sensing resolution: bin / sqrt(12) for range
      // and velocity, 0.5 deg for the angles.
      const double range_bin =
          sc.radio.c0 / (2.0 * sc.sensing.n_idft * sc.radio.delta_f_hz);
      const double vel_bin = sc.radio.c0 / (2.0 * sc.radio.fc_hz * sc.sensing.m_dft *
                                            sc.radio.symbol_s);
      const double sa = deg2rad(kv.get_double("tracker.sigma_angle_deg", 0.5));
      const double sr = range_bin / std::sqrt(12.0);
      const double sv = vel_bin / std::sqrt(12.0);
      sc.tracker.meas_var = Vec4(sr * sr, sv * sv, sa * sa, sa * sa);
    }

    sc.gamma_db = kv.get_double("beamformer.gamma_db", 10.0);
    sc.comm_noise_var = kv.get_double("beamformer.noise_var", 1e-12);
    sc.randomization_draws = kv.get_int("beamformer.n_draws", 100);
    sc.sca.eps = kv.get_double("beamformer.sca_eps", 1e-3);
    sc.sca.max_iters = kv.get_int("beamformer.sca_max_iters", 50);
    sc.sca.inner.eps_abs = kv.get_double("beamformer.inner_eps", 3e-6);
    sc.sca.inner.eps_rel = sc.sca.inner.eps_abs;
    sc.sca.inner.max_iters = kv.get_int("beamformer.inner_max_iters", 20000);
    sc.sca.inner.check_every = 10;
    sc.hybrid.sweeps = kv.get_int("beamformer.hybrid_sweeps", 60);

    sc.baseline.refine_interval_s = kv.get_double("baseline.refine_interval_s", 10e-3);
    sc.baseline.n_refine_beams = kv.get_int("baseline.n_refine_beams", 4);
    sc.baseline_dense.refine_interval_s = kv.get_double("baseline_dense.refine_interval_s", 5e-3);
    sc.baseline_dense.n_refine_beams = kv.get_int("baseline_dense.n_refine_beams", 64);

    for (int i = 0;; ++i) {
      const std::string prefix = "uav." + std::to_string(i) + ".";
      if (!kv.has(prefix + "position")) break;
      UavScenario u;
      const Vec p = kv.get_tuple(prefix + "position", 3);
      const Vec v = kv.get_tuple(prefix + "velocity", 3);
      u.position0 = Vec3(p(0), p(1), p(2));
      u.velocity0 = Vec3(v(0), v(1), v(2));
      u.rcs = kv.get_double(prefix + "rcs", 1.0);
      for (int j = 0;; ++j) {
        const std::string mkey = prefix + "maneuver." + std::to_string(j);
        if (!kv.has(mkey)) break;
        const Vec m = kv.get_tuple(mkey, 5);
        u.maneuvers.push_back({m(0), m(1), Vec3(m(2), m(3), m(4))});
      }
      sc.uavs.push_back(u);
    }

    sc.validate();
    return sc;
  }
};

}  // namespace ssbsim

#endif  // SSBSIM_SCENARIO_HPP
