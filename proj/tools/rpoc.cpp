/* Copyright 2026 The rpoc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// rpoc command line: validate configs, run/resume sweep experiments, and a
// small dense-propagation cross-check ("oracle") on the 144-dimensional
// flavoprotein pair.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rpoc/dense_oracle.hpp"
#include "rpoc/experiment.hpp"

namespace {

int cmd_validate(const std::string& config_path) {
  const rpoc::ExperimentConfig c = rpoc::load_experiment_config(config_path);
  const size_t points =
      c.is_contrast() ? c.j_sweep.size() : c.field_sweep.size();
  const size_t tasks =
      points * size_t(c.replications) * (c.is_contrast() ? 2 : 1);
  std::cout << "config ok\n"
            << "  model        " << rpoc::model_name_str(c.model) << "\n"
            << "  objective    " << rpoc::objective_str(c.objective) << "\n"
            << "  control      " << rpoc::control_family_str(c.family)
            << " (amplitude " << rpoc::fmt_g17(c.amplitude) << ")\n"
            << "  noise        " << rpoc::noise_model_str(c.noise.model)
            << " (rate " << rpoc::fmt_g17(c.noise.rate) << " /us)\n"
            << "  schedule     " << c.n_steps << " steps x "
            << rpoc::fmt_g17(c.dt) << " us\n"
            << "  horizon      "
            << (c.horizon.mode == rpoc::TailMode::infinite
                    ? std::string("infinite tail")
                    : "t1 = " + rpoc::fmt_g17(c.horizon.t1) + " us")
            << "\n"
            << "  sweep points " << points << "\n"
            << "  replications " << c.replications << "\n"
            << "  tasks        " << tasks << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out,
            int threads, std::uint64_t seed, bool seed_given) {
  nlohmann::json doc = rpoc::load_json_file(config_path);
  // The override lands in the snapshot, so resume sees the seed that ran.
  if (seed_given) {
    if (!doc.is_object())
      throw rpoc::Error(rpoc::ErrorCode::bad_config,
                        "config root must be a JSON object");
    doc["seed"] = seed;
  }
  const rpoc::ExperimentConfig c = rpoc::parse_experiment_config(doc);
  const rpoc::RunOutcome oc =
      rpoc::run_experiment(c, out, threads, &std::cout);
  std::cout << "run complete: " << oc.csv_path << " (" << oc.total_tasks
            << " tasks, " << oc.failed_tasks << " failed, "
            << rpoc::fmt_g17(oc.wall_time_s) << " s)\n";
  return oc.failed_tasks == 0 ? 0 : 3;
}

int cmd_resume(const std::string& dir, int threads) {
  const rpoc::RunOutcome oc = rpoc::resume_experiment(dir, threads, &std::cout);
  std::cout << "resume complete: " << oc.csv_path << " (" << oc.total_tasks
            << " tasks, " << oc.failed_tasks << " failed)\n";
  return oc.failed_tasks == 0 ? 0 : 3;
}

struct OracleArgs {
  double j_mhz = 2.0;
  double b0 = 0.05;
  double theta = 0.0;
  double phi = 0.0;
  double k_b = 1.0;
  double k_f = 1.0;
  std::string noise = "URF";
  double rate = 1.0;
  double t1 = 2.0;
  int steps = 20;
};

// Propagates the flavoprotein pair twice: once through the dense matrix
// exponential reference and once through the sparse Taylor engine the
// experiments use. Disagreement here means the fast path is wrong.
int cmd_oracle(const OracleArgs& a) {
  const rpoc::SpinSystem sys = rpoc::fadh_z(rpoc::kTwoPi * a.j_mhz);
  rpoc::FieldSpec field;
  field.b0 = a.b0;
  field.theta = a.theta;
  field.phi = a.phi;
  rpoc::validate_field(field);
  const rpoc::NoiseSpec noise{rpoc::parse_noise_model(a.noise), a.rate};
  if (a.steps < 1 || !(a.t1 > 0.0))
    throw rpoc::Error(rpoc::ErrorCode::bad_config,
                      "oracle needs steps >= 1 and t1 > 0");

  const rpoc::SparseCd l0 =
      rpoc::drift_liouvillian(sys, field, a.k_b, a.k_f, noise);
  const rpoc::DenseCd ld = rpoc::oracle::drift(sys, field, a.k_b, a.k_f, noise);
  const double assembly_dev = (rpoc::DenseCd(l0) - ld).cwiseAbs().maxCoeff();

  const rpoc::SparseCd ps = rpoc::singlet_projector(sys.reg);
  const rpoc::VecCd vec_ps = rpoc::vectorize(rpoc::DenseCd(ps));
  rpoc::VecCd dense_state = rpoc::singlet_born_state(ps);
  rpoc::VecCd sparse_state = dense_state;
  const double dt = a.t1 / a.steps;
  const rpoc::DenseCd step = rpoc::oracle::expm(ld, dt);

  std::cout << "dense-propagation oracle, dim " << ld.rows() << "\n";
  std::cout << "assembly deviation " << rpoc::fmt_g17(assembly_dev) << "\n";
  std::cout << "t_us,singlet_prob_dense,singlet_prob_sparse,state_dev\n";
  double max_dev = assembly_dev;
  for (int k = 1; k <= a.steps; ++k) {
    dense_state = step * dense_state;
    sparse_state = rpoc::expm_action(l0, sparse_state, dt, 1e-12);
    const double dev = (dense_state - sparse_state).cwiseAbs().maxCoeff();
    max_dev = std::max(max_dev, dev);
    std::cout << rpoc::fmt_g17(dt * k) << ','
              << rpoc::fmt_g17(vec_ps.dot(dense_state).real()) << ','
              << rpoc::fmt_g17(vec_ps.dot(sparse_state).real()) << ','
              << rpoc::fmt_g17(dev) << "\n";
  }
  const bool ok = max_dev < 1e-9;
  std::cout << "max deviation " << rpoc::fmt_g17(max_dev)
            << (ok ? " (ok)" : " (MISMATCH)") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radical-pair recombination control experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string resume_dir;
  int threads = 0;
  std::uint64_t seed = 0;

  CLI::App* validate =
      app.add_subcommand("validate", "parse and check a config file");
  validate->add_option("--config", config_path, "experiment config (JSON)")
      ->required();

  CLI::App* run = app.add_subcommand("run", "run a sweep experiment");
  run->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--threads", threads, "worker threads (0: auto)");
  CLI::Option* seed_opt =
      run->add_option("--seed", seed, "master seed override");

  CLI::App* resume =
      app.add_subcommand("resume", "continue an interrupted run");
  resume->add_option("--dir", resume_dir, "directory of the partial run")
      ->required();
  resume->add_option("--threads", threads, "worker threads (0: auto)");

  OracleArgs oa;
  CLI::App* oracle = app.add_subcommand(
      "oracle", "cross-check sparse propagation against a dense reference");
  oracle->add_option("--j-ex-mhz", oa.j_mhz, "exchange coupling (MHz)");
  oracle->add_option("--b0-mt", oa.b0, "field magnitude (mT)");
  oracle->add_option("--theta", oa.theta, "field polar angle (rad)");
  oracle->add_option("--phi", oa.phi, "field azimuth (rad)");
  oracle->add_option("--kb", oa.k_b, "singlet recombination rate (1/us)");
  oracle->add_option("--kf", oa.k_f, "spin-independent escape rate (1/us)");
  oracle->add_option("--noise", oa.noise, "noise model (none|STD|URF|CRF)");
  oracle->add_option("--rate", oa.rate, "noise rate (1/us)");
  oracle->add_option("--t1-us", oa.t1, "propagation horizon (us)");
  oracle->add_option("--steps", oa.steps, "report rows");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(config_path);
    if (*run)
      return cmd_run(config_path, out_dir, threads, seed,
                     seed_opt->count() > 0);
    if (*resume) return cmd_resume(resume_dir, threads);
    if (*oracle) return cmd_oracle(oa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
