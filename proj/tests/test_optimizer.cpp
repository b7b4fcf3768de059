// Problem assembly, line search, and the gradient-ascent loop.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rpoc/optimizer.hpp"
#include "rpoc/spin_model.hpp"

using namespace rpoc;

namespace {

ControlSchedule random_schedule(std::mt19937_64& rng, Eigen::Index steps,
                                double dt,
                                const std::vector<ControlChannel>& chans) {
  ControlSchedule s;
  s.dt = dt;
  s.amplitudes.resize(steps, Eigen::Index(chans.size()));
  for (Eigen::Index k = 0; k < steps; ++k)
    for (size_t i = 0; i < chans.size(); ++i) {
      std::uniform_real_distribution<double> un(chans[i].lower_bound,
                                                chans[i].upper_bound);
      s.amplitudes(k, Eigen::Index(i)) = un(rng);
    }
  return s;
}

std::vector<ControlChannel> unit_bounds_channel() {
  ControlChannel ch;
  ch.lower_bound = -1.0;
  ch.upper_bound = 1.0;
  return {ch};
}

}  // namespace

TEST_CASE("schedule initialization is seeded and clipped") {
  const SpinSystem sys = fadh_z(kTwoPi);
  OptimizerConfig config;
  config.rng_seed = 17;

  SECTION("same seed replays bitwise") {
    const PreparedSystem psys(sys, {0.05, 0.0, 0.0}, 1.0, 0.5,
                              {NoiseModel::none, 0.0}, ControlFamily::UPC,
                              20.0);
    const ControlSchedule a =
        init_schedule(40, 0.05, psys.channels(), config);
    const ControlSchedule b =
        init_schedule(40, 0.05, psys.channels(), config);
    CHECK(a.amplitudes == b.amplitudes);
    config.rng_seed = 18;
    const ControlSchedule c =
        init_schedule(40, 0.05, psys.channels(), config);
    CHECK(a.amplitudes != c.amplitudes);
    CHECK((a.amplitudes.cwiseAbs().array() <= 1.0).all());
  }

  SECTION("incoherent channels clamp negative draws to zero") {
    const PreparedSystem psys(sys, {0.05, 0.0, 0.0}, 1.0, 0.5,
                              {NoiseModel::none, 0.0}, ControlFamily::UIC,
                              4.0);
    const ControlSchedule s =
        init_schedule(250, 0.05, psys.channels(), config);
    CHECK(s.amplitudes.minCoeff() == 0.0);
    CHECK(s.amplitudes.maxCoeff() <= 1.0);
    // About half of Normal(0, 0.1^2) draws land below zero.
    const double zeros =
        double((s.amplitudes.array() == 0.0).count()) / double(s.amplitudes.size());
    CHECK(zeros > 0.3);
    CHECK(zeros < 0.7);
  }

  SECTION("sampler mean over a million draws") {
    std::mt19937_64 rng(1);
    double sum = 0.0;
    for (int i = 0; i < 1000000; ++i) sum += 0.1 * standard_normal(rng);
    CHECK(std::abs(sum / 1e6) < 3e-4);
  }
}

TEST_CASE("box projection pins amplitudes at active bounds") {
  const std::vector<ControlChannel> chans = [] {
    ControlChannel incoherent;
    incoherent.lower_bound = 0.0;
    incoherent.upper_bound = 1.0;
    return std::vector<ControlChannel>{incoherent};
  }();
  Eigen::MatrixXd u(2, 1);
  u << 0.0, 0.4;
  Eigen::MatrixXd step(2, 1);
  step << -0.3, 0.9;  // a negative push at the lower bound must not move it
  Eigen::MatrixXd cand = u + step;
  project_into_bounds(cand, chans);
  CHECK(cand(0, 0) == 0.0);
  CHECK(cand(1, 0) == 1.0);
  Eigen::MatrixXd twice = cand;
  project_into_bounds(twice, chans);
  CHECK(twice == cand);

  // Blocked directions drop out of the projected gradient norm: outward
  // pushes at either bound are ignored, inward ones still count.
  Eigen::MatrixXd g(2, 1);
  g << -5.0, 0.2;
  Eigen::MatrixXd pinned(2, 1);
  pinned << 0.0, 1.0;
  CHECK(projected_gradient_norm(g, pinned, chans) == 0.0);
  g(1, 0) = -0.1;
  CHECK(projected_gradient_norm(g, pinned, chans) == 0.1);
  Eigen::MatrixXd interior = Eigen::MatrixXd::Constant(2, 1, 0.5);
  g << -5.0, 0.2;
  CHECK(projected_gradient_norm(g, interior, chans) == 5.0);
}

TEST_CASE("line search on a scalar quadratic finds the optimum") {
  const std::vector<ControlChannel> chans = unit_bounds_channel();
  const auto f = [](const ControlSchedule& s) {
    const double v = s.amplitudes(0, 0);
    return -(v - 0.3) * (v - 0.3);
  };
  ControlSchedule u;
  u.dt = 1.0;
  u.amplitudes = Eigen::MatrixXd::Zero(1, 1);
  double best = f(u);
  double rate = 0.0;
  Eigen::MatrixXd g(1, 1);
  for (int iter = 1; iter <= 100; ++iter) {
    g(0, 0) = -2.0 * (u.amplitudes(0, 0) - 0.3);
    if (std::abs(g(0, 0)) < 1e-14) break;
    if ((iter - 1) % 10 == 0) rate = 0.1 / std::abs(g(0, 0));
    const LineSearchResult ls = line_search(f, chans, u, g, best, rate);
    if (ls.stalled) break;
    u = ls.schedule;
    best = ls.objective;
    rate = ls.rate;
  }
  CHECK(std::abs(u.amplitudes(0, 0) - 0.3) < 1e-6);
}

TEST_CASE("line search edge handling") {
  const std::vector<ControlChannel> chans = unit_bounds_channel();
  ControlSchedule u;
  u.dt = 1.0;
  u.amplitudes = Eigen::MatrixXd::Constant(1, 1, 0.25);
  const auto f = [](const ControlSchedule& s) { return s.amplitudes(0, 0); };

  SECTION("zero gradient leaves the schedule untouched") {
    const Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 1);
    const LineSearchResult ls = line_search(f, chans, u, g, f(u), 0.5);
    CHECK_FALSE(ls.stalled);
    CHECK(ls.halvings == 0);
    CHECK(ls.schedule.amplitudes == u.amplitudes);
  }

  SECTION("no improvement stalls after the halving budget") {
    // Objective already maximal along this direction within the box.
    u.amplitudes(0, 0) = 1.0;
    Eigen::MatrixXd g(1, 1);
    g << 2.0;
    const LineSearchResult ls = line_search(f, chans, u, g, f(u), 0.5);
    CHECK(ls.stalled);
    CHECK(ls.halvings == 40);
    CHECK(ls.schedule.amplitudes == u.amplitudes);
  }

  SECTION("invalid inputs throw") {
    Eigen::MatrixXd g(1, 1);
    g << std::nan("");
    CHECK_THROWS_AS(line_search(f, chans, u, g, 0.0, 0.5), Error);
    g << 1.0;
    CHECK_THROWS_AS(line_search(f, chans, u, g, 0.0, 0.0), Error);
  }
}

TEST_CASE("objective terms compose linearly") {
  const SpinSystem sys = fadh_z(kTwoPi);
  const double k_b = 1.0, k_f = 0.5;
  const NoiseSpec noise{NoiseModel::URF, 0.3};
  const PreparedSystem psys_z(sys, {0.05, 0.0, 0.0}, k_b, k_f, noise,
                              ControlFamily::UPC, 15.0);
  const PreparedSystem psys_x(sys, {0.05, kTwoPi / 4.0, 0.0}, k_b, k_f,
                              noise, ControlFamily::UPC, 15.0);
  const VecCd rho0 = singlet_born_state(psys_z.ps());
  const Eigen::Index steps = 8;
  const double dt = 0.1;
  const Horizon horizon{1.3, TailMode::finite};
  const TaylorOptions topt{1e-12};
  const Rk8Options rk{1e-12, 1e-14};

  const ControlProblem contrast({{&psys_z, 1.0}, {&psys_x, -1.0}}, rho0,
                                steps, dt, horizon, topt, rk);
  const ControlProblem only_z({{&psys_z, 1.0}}, rho0, steps, dt, horizon,
                              topt, rk);
  const ControlProblem only_x({{&psys_x, 1.0}}, rho0, steps, dt, horizon,
                              topt, rk);

  std::mt19937_64 rng(3);
  const ControlSchedule sched =
      random_schedule(rng, steps, dt, psys_z.channels());

  const ProblemEvaluation evc = contrast.evaluate_with_gradient(sched);
  const ProblemEvaluation evz = only_z.evaluate_with_gradient(sched);
  const ProblemEvaluation evx = only_x.evaluate_with_gradient(sched);
  CHECK(std::abs(evc.objective - (evz.objective - evx.objective)) < 1e-12);
  CHECK((evc.grad - (evz.grad - evx.grad)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(evc.yields[0] == evz.yields[0]);
  CHECK(evc.yields[1] == evx.yields[0]);
  CHECK(contrast.evaluate(sched) ==
        Catch::Approx(evc.objective).margin(1e-12));

  SECTION("weight sign flips the evaluation bitwise") {
    const ControlProblem minus({{&psys_z, -1.0}}, rho0, steps, dt, horizon,
                               topt, rk);
    const ProblemEvaluation evm = minus.evaluate_with_gradient(sched);
    CHECK(evm.objective == -evz.objective);
    CHECK(evm.grad == -evz.grad);
    CHECK(evm.yields[0] == evz.yields[0]);
  }
}

TEST_CASE("tail pricing through the cached seed matches quadrature") {
  const SpinSystem sys = fadh_z(kTwoPi);
  const PreparedSystem psys(sys, {0.05, 0.4, 0.8}, 0.9, 0.4,
                            {NoiseModel::STD, 0.2}, ControlFamily::coherent_x,
                            25.0);
  const VecCd rho0 = singlet_born_state(psys.ps());
  const Eigen::Index steps = 9;
  const double dt = 0.1;
  const double t_c = double(steps) * dt;
  const TaylorOptions topt{1e-12};

  std::mt19937_64 rng(19);
  const ControlSchedule sched =
      random_schedule(rng, steps, dt, psys.channels());

  SECTION("finite tail") {
    const Horizon horizon{t_c + 0.8, TailMode::finite};
    const ControlProblem problem({{&psys, 1.0}}, rho0, steps, dt, horizon,
                                 topt, Rk8Options{1e-12, 1e-14});
    const Trajectory traj = forward_trajectory(psys, sched, rho0, topt);
    const double want =
        traj.yield_so_far.back() +
        tail_evaluate(psys, traj.checkpoints.back(), t_c, horizon.t1,
                      TailMode::finite, topt);
    CHECK(std::abs(problem.evaluate(sched) - want) < 1e-9);
  }

  SECTION("infinite tail") {
    const Horizon horizon{0.0, TailMode::infinite};
    const ControlProblem problem({{&psys, 1.0}}, rho0, steps, dt, horizon,
                                 topt, Rk8Options{1e-12, 1e-14});
    const Trajectory traj = forward_trajectory(psys, sched, rho0, topt);
    const double want =
        traj.yield_so_far.back() +
        tail_evaluate(psys, traj.checkpoints.back(), t_c, 0.0,
                      TailMode::infinite, topt);
    CHECK(std::abs(problem.evaluate(sched) - want) < 1e-9);
  }
}

TEST_CASE("ascent on a minimization problem drives the yield down") {
  const SpinSystem sys = fadh_z(kTwoPi);
  const PreparedSystem psys(sys, {0.05, 0.0, 0.0}, 1.0, 0.5,
                            {NoiseModel::none, 0.0},
                            ControlFamily::coherent_x, 30.0);
  const VecCd rho0 = singlet_born_state(psys.ps());
  const ControlProblem problem({{&psys, -1.0}}, rho0, 20, 0.05,
                               Horizon{1.0, TailMode::finite});
  OptimizerConfig config;
  config.max_iterations = 25;
  config.rng_seed = 5;

  const OptimizationResult res = optimize(problem, config);
  REQUIRE(res.objective_history.size() >= 2);
  for (size_t i = 1; i < res.objective_history.size(); ++i)
    CHECK(res.objective_history[i] > res.objective_history[i - 1]);
  CHECK(res.objective_history.back() > res.objective_history.front());
  CHECK(Eigen::Index(res.line_search_halvings.size()) >=
        Eigen::Index(res.objective_history.size()) - 1);
  for (size_t i = 0; i < psys.channels().size(); ++i) {
    CHECK(res.schedule.amplitudes.col(Eigen::Index(i)).minCoeff() >=
          psys.channels()[i].lower_bound);
    CHECK(res.schedule.amplitudes.col(Eigen::Index(i)).maxCoeff() <=
          psys.channels()[i].upper_bound);
  }

  SECTION("bitwise determinism across repeated runs") {
    const OptimizationResult again = optimize(problem, config);
    REQUIRE(again.objective_history.size() ==
            res.objective_history.size());
    for (size_t i = 0; i < res.objective_history.size(); ++i)
      CHECK(again.objective_history[i] == res.objective_history[i]);
    CHECK(again.schedule.amplitudes == res.schedule.amplitudes);
    CHECK(again.iterations_used == res.iterations_used);
  }
}

TEST_CASE("degenerate optimizer runs terminate cleanly") {
  const SpinSystem sys = fadh_z(kTwoPi);
  const VecCd rho0 = singlet_born_state(singlet_projector(sys.reg));

  SECTION("zero control scale stops at the first iteration") {
    const PreparedSystem psys(sys, {0.05, 0.0, 0.0}, 1.0, 0.5,
                              {NoiseModel::none, 0.0}, ControlFamily::UPC,
                              0.0);
    const ControlProblem problem({{&psys, -1.0}}, rho0, 10, 0.1,
                                 Horizon{1.0, TailMode::finite});
    OptimizerConfig config;
    config.rng_seed = 9;
    const OptimizationResult res = optimize(problem, config);
    CHECK(res.termination == Termination::tolerance);
    CHECK(res.stop_detail == "projected gradient norm");
    CHECK(res.iterations_used == 1);
    CHECK(res.objective_history.size() == 1);
    const ControlSchedule init =
        init_schedule(10, 0.1, psys.channels(), config);
    CHECK(res.schedule.amplitudes == init.amplitudes);
  }

  SECTION("iteration budget of zero returns the seeded schedule") {
    const PreparedSystem psys(sys, {0.05, 0.0, 0.0}, 1.0, 0.5,
                              {NoiseModel::none, 0.0}, ControlFamily::UPC,
                              10.0);
    const ControlProblem problem({{&psys, -1.0}}, rho0, 10, 0.1,
                                 Horizon{1.0, TailMode::finite});
    OptimizerConfig config;
    config.max_iterations = 0;
    const OptimizationResult res = optimize(problem, config);
    CHECK(res.termination == Termination::max_iters);
    CHECK(res.iterations_used == 0);
    CHECK(res.objective_history.size() == 1);
  }

  SECTION("configuration and problem validation") {
    OptimizerConfig config;
    config.reset_period = 0;
    CHECK_THROWS_AS(config.validate(), Error);
    config = {};
    config.yield_rel_tol = 0.0;
    CHECK_THROWS_AS(config.validate(), Error);
    config = {};
    config.max_iterations = -1;
    CHECK_THROWS_AS(config.validate(), Error);

    const PreparedSystem psys(sys, {0.05, 0.0, 0.0}, 1.0, 0.5,
                              {NoiseModel::none, 0.0}, ControlFamily::UPC,
                              10.0);
    CHECK_THROWS_AS(ControlProblem({}, rho0, 10, 0.1,
                                   Horizon{1.0, TailMode::finite}),
                    Error);
    CHECK_THROWS_AS(ControlProblem({{&psys, 0.5}}, rho0, 10, 0.1,
                                   Horizon{1.0, TailMode::finite}),
                    Error);
    CHECK_THROWS_AS(ControlProblem({{&psys, 1.0}}, rho0, 10, 0.1,
                                   Horizon{0.5, TailMode::finite}),
                    Error);
    const ControlProblem ok({{&psys, 1.0}}, rho0, 10, 0.1,
                            Horizon{1.0, TailMode::finite});
    ControlSchedule wrong;
    wrong.dt = 0.2;
    wrong.amplitudes = Eigen::MatrixXd::Zero(10, 2);
    CHECK_THROWS_AS(ok.evaluate(wrong), Error);
  }
}
