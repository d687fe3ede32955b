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

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "ssbsim/io.hpp"
#include "ssbsim/scenario.hpp"
#include "ssbsim/sim.hpp"

namespace fs = std::filesystem;
using namespace ssbsim;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;  // 0: keep the scenario file's seed
  int trials = 10;
  std::string scheme = "proposed";
};

ScenarioConfig load_scenario(const CommonArgs& args) {
  ScenarioConfig sc = ScenarioConfig::from_config(KeyValueConfig::from_file(args.config_path));
  if (args.seed != 0) sc.seed = args.seed;
  fs::create_directories(args.out_dir);
  return sc;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

int cmd_sense(const CommonArgs& args) {
  const ScenarioConfig sc = load_scenario(args);
  const SweepPlan plan = sc.sweep_plan();
  const AngleGrid grid = sc.music_grid();
  const SsbGrid ssb = build_ssb_grid(sc.seed);
  const auto truth = propagate_truth(sc.uavs, 0.0);

  std::vector<Measurement> all;
  BurstDebug best_dbg;
  double best_power = -1.0;
  int best_beam = -1;
  for (size_t b = 0; b < plan.beams.size(); ++b) {
    BurstDebug dbg;
    const auto ms = sense_burst(truth, plan.beams[b], sc.tx_upa, sc.rx_upa, sc.radio, ssb,
                                grid, sc.sensing, derive_seed(sc.seed, 0, b), nullptr, &dbg);
    all.insert(all.end(), ms.begin(), ms.end());
    for (const auto& det : dbg.detections) {
      if (det.power > best_power) {
        best_power = det.power;
        best_beam = static_cast<int>(b);
        best_dbg = dbg;
      }
    }
  }
  const double range_bin = sc.radio.c0 / (2.0 * sc.sensing.n_idft * sc.radio.delta_f_hz);
  const auto merged =
      detail::merge_burst_measurements(all, 1.5 * range_bin, sc.merge_angle_rad);
  write_measurements(join(args.out_dir, "measurements.csv"), merged);
  if (best_beam >= 0) {
    write_dd_map(join(args.out_dir, "dd_map.csv"), best_dbg.dd, best_dbg.axes);
    for (size_t p = 0; p < best_dbg.music.size(); ++p)
      write_music_spectrum(join(args.out_dir, "music_" + std::to_string(p) + ".csv"),
                           best_dbg.music[p], grid);
    std::cout << "strongest detection in beam " << best_beam << "; " << merged.size()
              << " merged measurement(s)\n";
  } else {
    std::cout << "no detections\n";
  }
  return 0;
}

int cmd_track(const CommonArgs& args, const std::string& measurements_path) {
  const ScenarioConfig sc = load_scenario(args);
  std::ifstream in(measurements_path);
  if (!in) {
    std::cerr << "cannot open " << measurements_path << "\n";
    return 1;
  }
  // CSV: time,r,v,phi,theta (angles in degrees), one row per measurement.
  std::string line;
  std::getline(in, line);  // header
  std::map<double, std::vector<Measurement>> by_time;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double time, r, v, phi_deg, theta_deg;
    if (!(row >> time >> r >> v >> phi_deg >> theta_deg)) {
      std::cerr << "bad measurement row: " << line << "\n";
      return 1;
    }
    Measurement m;
    m.range_m = r;
    m.velocity_mps = v;
    m.elevation_rad = deg2rad(phi_deg);
    m.azimuth_rad = deg2rad(theta_deg);
    by_time[time].push_back(m);
  }

  Tracker tracker(sc.tracker);
  std::vector<TrackRow> rows;
  double t_prev = by_time.empty() ? 0.0 : by_time.begin()->first;
  for (const auto& [t, ms] : by_time) {
    // Predict in KF-period steps up to the measurement time.
    double remaining = t - t_prev;
    while (remaining > 1e-12) {
      const double dt = std::min(remaining, sc.kf_period_s);
      tracker.predict_all(dt);
      remaining -= dt;
    }
    tracker.measurement_burst(ms, t);
    t_prev = t;
    for (const auto& tr : tracker.tracks()) {
      TrackRow row;
      row.time = t;
      row.track_id = tr.id;
      row.state = tr.s;
      const auto p = predicted_params(tr);
      row.range = p.range_m;
      row.elevation_rad = p.elevation_rad;
      row.azimuth_rad = p.azimuth_rad;
      row.sigma_r = p.sigma_r;
      row.sigma_el = p.sigma_el;
      row.sigma_az = p.sigma_az;
      row.trace_p = tr.P.trace();
      row.trace_p_corrected = tr.P_corrected.trace();
      rows.push_back(row);
    }
  }
  write_track_log(join(args.out_dir, "track_log.csv"), rows);
  std::cout << rows.size() << " track-log rows\n";
  return 0;
}

int cmd_beamform(const CommonArgs& args, const std::string& priors_path, bool nonrobust) {
  const ScenarioConfig sc = load_scenario(args);
  std::ifstream in(priors_path);
  if (!in) {
    std::cerr << "cannot open " << priors_path << "\n";
    return 1;
  }
  // CSV: r,phi,theta,sigma_r,sigma_phi,sigma_theta,noise_var,gamma
  // (angles and their sigmas in degrees, gamma in dB).
  std::string line;
  std::getline(in, line);  // header
  std::vector<UserPrior> priors;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double r, phi, theta, sr, sphi, stheta, noise, gamma_db;
    if (!(row >> r >> phi >> theta >> sr >> sphi >> stheta >> noise >> gamma_db)) {
      std::cerr << "bad priors row: " << line << "\n";
      return 1;
    }
    UserPrior p;
    p.range_m = r;
    p.elevation_rad = deg2rad(phi);
    p.azimuth_rad = deg2rad(theta);
    p.sigma_r = nonrobust ? 0.0 : sr;
    p.sigma_el = nonrobust ? 0.0 : deg2rad(sphi);
    p.sigma_az = nonrobust ? 0.0 : deg2rad(stheta);
    p.noise_var = noise;
    p.sinr_threshold_linear = db2lin(gamma_db);
    priors.push_back(p);
  }
  if (priors.empty()) {
    std::cerr << "no priors\n";
    return 1;
  }

  std::vector<CorrelationModel> models;
  Vec gammas(priors.size());
  for (size_t k = 0; k < priors.size(); ++k) {
    models.push_back(build_correlation_model(priors[k], sc.tx_upa, sc.radio));
    gammas(k) = priors[k].sinr_threshold_linear;
  }
  const auto sol = solve_sca(models, sc.p_max_w, gammas, sc.sca);
  if (sol.status == sdp::SolveStatus::kInfeasible) {
    std::cerr << "INFEASIBLE: SINR thresholds cannot be met\n";
    return 2;
  }
  const auto rand = randomize_rank1(sol, models, sc.p_max_w, gammas, sc.randomization_draws,
                                    sc.seed);
  if (rand.status != RandomizeStatus::kOk) {
    std::cerr << "NO_FEASIBLE_DRAW: randomization found no feasible candidate\n";
    return 3;
  }
  const auto hybrid = hybrid_factorize(rand.w_columns, sc.tx_upa, sc.p_max_w, sc.hybrid);
  const CxMat w = hybrid.set.combined();

  const AngleGrid grid = sc.music_grid();
  for (size_t k = 0; k < priors.size(); ++k) {
    const auto bp = beam_pattern(w.col(k), sc.tx_upa, sc.radio, grid);
    write_beam_pattern(join(args.out_dir, "beam_pattern_user" + std::to_string(k) + ".csv"),
                       bp, grid);
  }
  // Beamformer matrices, flat complex CSV.
  {
    auto out = std::ofstream(join(args.out_dir, "beamformer.csv"), std::ios::binary);
    out << "matrix,row,col,re,im\n";
    auto dump = [&](const char* name, const CxMat& m) {
      for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
          out << name << ',' << i << ',' << j << ',' << detail::fmt(m(i, j).real()) << ','
              << detail::fmt(m(i, j).imag()) << '\n';
    };
    dump("analog", hybrid.set.analog);
    dump("digital", hybrid.set.digital);
    dump("combined", w);
  }
  std::cout << "average sum-rate (digital relaxation bound): " << sol.objective
            << "\naverage sum-rate (rank-1 digital): " << rand.sum_rate
            << "\naverage sum-rate (hybrid): " << average_sum_rate(w, models) << "\n";
  return 0;
}

int cmd_simulate(const CommonArgs& args, double velocity_factor) {
  const ScenarioConfig sc = load_scenario(args);
  RunOptions opts;
  opts.velocity_factor = velocity_factor;
  opts.scheme_tag = args.scheme;
  RunResult result;
  if (args.scheme == "proposed") {
    result = run_proposed(sc, opts);
  } else if (args.scheme == "nonrobust") {
    opts.robust = false;
    result = run_proposed(sc, opts);
  } else if (args.scheme == "baseline") {
    result = run_baseline(sc, sc.baseline, opts);
  } else if (args.scheme == "baseline-dense") {
    result = run_baseline(sc, sc.baseline_dense, opts);
  } else {
    std::cerr << "unknown scheme: " << args.scheme << "\n";
    return 1;
  }
  write_rate_log(join(args.out_dir, "rate_log.csv"), result.rate_log);
  if (!result.track_log.empty())
    write_track_log(join(args.out_dir, "track_log.csv"), result.track_log);
  write_run_summary(join(args.out_dir, "summary.csv"), result, args.scheme);
  std::cout << args.scheme << ": mean rate " << result.mean_rate << " bit/s/Hz, overhead "
            << result.overhead_time << " s, failures " << result.beamformer_failures << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis_name, std::vector<double> values,
              bool quiet) {
  const ScenarioConfig sc = load_scenario(args);
  SweepAxis axis;
  if (axis_name == "velocity_factor") {
    axis = SweepAxis::kVelocityFactor;
    if (values.empty()) values = {1.0, 1.5, 2.0};
  } else if (axis_name == "ssb_period") {
    axis = SweepAxis::kSsbPeriod;
    if (values.empty()) values = {10e-3, 20e-3, 40e-3, 80e-3, 160e-3};
  } else {
    std::cerr << "unknown axis: " << axis_name << "\n";
    return 1;
  }
  const auto rows = sweep_experiment(sc, axis, values, args.trials,
                                     quiet ? std::function<void(const std::string&)>{}
                                           : [](const std::string& msg) {
                                               std::cout << "  " << msg << "\n";
                                             });
  write_sweep_summary(join(args.out_dir, "summary.csv"), rows);
  for (const auto& r : rows)
    std::cout << r.axis << '=' << r.value << ' ' << r.scheme << ": mean " << r.mean_rate
              << " (std " << r.std_rate << ")\n";
  return 0;
}

int cmd_calibrate(const CommonArgs& args) {
  const ScenarioConfig sc = load_scenario(args);
  const SweepPlan plan = sc.sweep_plan();
  const AngleGrid grid = sc.music_grid();
  const SsbGrid ssb = build_ssb_grid(sc.seed);
  const CxMat steering = steering_table(sc.rx_upa, sc.radio, grid);
  std::vector<CxMat> bs_cache(plan.beams.size());

  auto rng = make_rng(sc.seed, 0xCA11);
  std::uniform_real_distribution<double> uaz(sc.sweep_az_min * 0.9, sc.sweep_az_max * 0.9);
  std::uniform_real_distribution<double> uel(sc.sweep_el_min + 0.02, sc.sweep_el_max * 0.9);
  std::uniform_real_distribution<double> ur(30.0, 150.0);
  std::uniform_real_distribution<double> uv(-25.0, 25.0);

  std::vector<double> err_r, err_v, err_el, err_az;
  int missed = 0;
  for (int trial = 0; trial < args.trials; ++trial) {
    const double az = uaz(rng), el = uel(rng), r = ur(rng), v = uv(rng);
    UavTruth u;
    u.position = r * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                          std::sin(el));
    u.velocity = v * u.position.normalized();
    u.rcs = 1.0;
    const int b = plan.covering_beam(az, el);
    MusicContext ctx{&steering, &bs_cache[b]};
    const auto ms = sense_burst({u}, plan.beams[b], sc.tx_upa, sc.rx_upa, sc.radio, ssb, grid,
                                sc.sensing, derive_seed(sc.seed, 0xCAF, trial), &ctx);
    if (ms.empty()) {
      ++missed;
      continue;
    }
    // Nearest measurement to the truth.
    const Measurement* best = &ms[0];
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& m : ms) {
      const double d = std::abs(m.range_m - r) + 50.0 * std::abs(m.azimuth_rad - az) +
                       50.0 * std::abs(m.elevation_rad - el);
      if (d < best_d) {
        best_d = d;
        best = &m;
      }
    }
    err_r.push_back(best->range_m - r);
    err_v.push_back(best->velocity_mps - v);
    err_el.push_back(best->elevation_rad - el);
    err_az.push_back(best->azimuth_rad - az);
  }
  auto rms = [](const std::vector<double>& e) {
    if (e.empty()) return 0.0;
    double acc = 0.0;
    for (double x : e) acc += x * x;
    return std::sqrt(acc / e.size());
  };
  std::cout << "calibration over " << args.trials << " trials (" << missed << " missed)\n"
            << "suggested measurement-noise config:\n"
            << "tracker.sigma_r = " << rms(err_r) << "\n"
            << "tracker.sigma_v = " << rms(err_v) << "\n"
            << "tracker.sigma_angle_deg = "
            << rad2deg(std::max(rms(err_el), rms(err_az))) << "\n";
  auto out = std::ofstream(join(args.out_dir, "calibration.csv"), std::ios::binary);
  out << "quantity,rms_error\n";
  out << "range_m," << detail::fmt(rms(err_r)) << "\n";
  out << "velocity_mps," << detail::fmt(rms(err_v)) << "\n";
  out << "elevation_deg," << detail::fmt(rad2deg(rms(err_el))) << "\n";
  out << "azimuth_deg," << detail::fmt(rad2deg(rms(err_az))) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSB-based sensing, EKF tracking, and robust beamforming simulator"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string measurements_path, priors_path, axis = "ssb_period";
  std::vector<double> values;
  double velocity_factor = 1.0;
  bool nonrobust = false, quiet = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "scenario config file");
    if (needs_config) opt->required();
    cmd->add_option("--seed", args.seed, "override the scenario seed (0 keeps the file's)");
    cmd->add_option("--out", args.out_dir, "output directory");
  };

  auto* sense = app.add_subcommand("sense", "run one SS-burst sweep and dump sensing products");
  add_common(sense);

  auto* track = app.add_subcommand("track", "replay a measurement log through the EKF");
  add_common(track);
  track->add_option("--measurements", measurements_path,
                    "CSV: time,r,v,phi,theta (deg)")->required();

  auto* beamform = app.add_subcommand("beamform", "solve one robust beamforming instance");
  add_common(beamform);
  beamform->add_option("--priors", priors_path,
                       "CSV: r,phi,theta,sigma_r,sigma_phi,sigma_theta,noise_var,gamma "
                       "(angles deg, gamma dB)")->required();
  beamform->add_flag("--nonrobust", nonrobust, "ignore the sigma columns (point estimates)");

  auto* simulate = app.add_subcommand("simulate", "run one end-to-end scenario");
  add_common(simulate);
  simulate->add_option("--scheme", args.scheme,
                       "proposed | baseline | baseline-dense | nonrobust");
  simulate->add_option("--velocity-factor", velocity_factor, "scales velocity and acceleration");

  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep over a scenario axis");
  add_common(sweep);
  sweep->add_option("--axis", axis, "velocity_factor | ssb_period");
  sweep->add_option("--values", values, "axis values (defaults per axis)");
  sweep->add_option("--trials", args.trials, "Monte-Carlo trials per value");
  sweep->add_flag("--quiet", quiet, "suppress progress lines");

  auto* calibrate = app.add_subcommand("calibrate-meas-noise",
                                       "Monte-Carlo sensing-error calibration for Q'");
  add_common(calibrate);
  calibrate->add_option("--trials", args.trials, "number of random targets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sense) return cmd_sense(args);
    if (*track) return cmd_track(args, measurements_path);
    if (*beamform) return cmd_beamform(args, priors_path, nonrobust);
    if (*simulate) return cmd_simulate(args, velocity_factor);
    if (*sweep) return cmd_sweep(args, axis, values, quiet);
    if (*calibrate) return cmd_calibrate(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
