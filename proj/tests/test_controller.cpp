#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "platoon/controller.hpp"
#include "platoon/rng.hpp"

using namespace platoon;

namespace {

OcpSpec base_spec(int horizon) {
  OcpSpec spec;
  spec.params = VehicleParams{};
  spec.matrices = build_matrices(spec.params);
  spec.terminal = synthesize_terminal(spec.params, 10.0, 1.0);
  spec.horizon = horizon;
  spec.weights = CostWeights::from_q_r(10.0, 1.0);
  spec.tube_scaling = 0.2;
  spec.consistency_level = 50.0;
  return spec;
}

void attach_zero_neighbor(OcpSpec& spec) {
  NeighborTrajectory nb;
  nb.states.assign(spec.horizon + 1, Eigen::Vector3d::Zero());
  spec.neighbors = {nb};
}

// ---------------------------------------------------------------------------
// Brute-force oracle: rollout + literal constraint checks + direct cost sum,
// evaluated over a two-level input grid. Kept fully independent of the
// condensed formulation inside solve_ocp.

struct OracleResult {
  bool feasible = false;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<double> inputs;
};

bool oracle_feasible(const OcpSpec& spec, const std::vector<double>& u,
                     std::vector<Eigen::Vector3d>& xs) {
  const int n = spec.horizon;
  const double radius = spec.params.state_radius();
  xs.assign(n + 1, Eigen::Vector3d::Zero());
  xs[0] = spec.x0;
  for (int i = 0; i < n; ++i) xs[i + 1] = step_nominal(xs[i], u[i], spec.matrices);

  double prev = spec.prev_input;
  for (int i = 0; i < n; ++i) {
    if (xs[i].norm() > (1.0 - spec.tube_scaling * i / n) * radius + 1e-12)
      return false;
    if (u[i] < spec.params.u_min - 1e-12 || u[i] > spec.params.u_max + 1e-12)
      return false;
    const double du = u[i] - prev;
    if (du < spec.params.du_min - 1e-12 || du > spec.params.du_max + 1e-12)
      return false;
    prev = u[i];
    double coop = 0.0;
    for (const auto& nb : spec.neighbors)
      coop += spec.weights.q_coop * (xs[i] - nb.states[i]).squaredNorm();
    if (!spec.neighbors.empty() &&
        coop > spec.neighbors.size() * spec.consistency_level + 1e-12)
      return false;
  }
  const double term = xs[n].dot(spec.terminal.P * xs[n]);
  return term <= spec.terminal.epsilon * spec.terminal.epsilon + 1e-12;
}

double oracle_cost(const OcpSpec& spec, const std::vector<double>& u,
                   const std::vector<Eigen::Vector3d>& xs) {
  double c = 0.0;
  for (int i = 0; i < spec.horizon; ++i) {
    c += spec.weights.q * xs[i].squaredNorm() + spec.weights.r * u[i] * u[i];
    for (const auto& nb : spec.neighbors)
      c += spec.weights.q_coop * (xs[i] - nb.states[i]).squaredNorm();
  }
  c += xs[spec.horizon].dot(spec.terminal.P * xs[spec.horizon]);
  return c;
}

void grid_scan(const OcpSpec& spec, const std::vector<double>& lo,
               const std::vector<double>& hi, double step, OracleResult& best) {
  const int n = spec.horizon;
  std::vector<double> u(n, 0.0);
  std::vector<Eigen::Vector3d> xs;
  const auto count = [&](int i) {
    return static_cast<int>(std::floor((hi[i] - lo[i]) / step + 1e-9)) + 1;
  };
  if (n == 1) {
    for (int a = 0; a < count(0); ++a) {
      u[0] = lo[0] + a * step;
      if (!oracle_feasible(spec, u, xs)) continue;
      const double c = oracle_cost(spec, u, xs);
      if (c < best.cost) best = {true, c, u};
    }
    return;
  }
  for (int a = 0; a < count(0); ++a) {
    u[0] = lo[0] + a * step;
    for (int b = 0; b < count(1); ++b) {
      u[1] = lo[1] + b * step;
      if (!oracle_feasible(spec, u, xs)) continue;
      const double c = oracle_cost(spec, u, xs);
      if (c < best.cost) best = {true, c, u};
    }
  }
}

OracleResult grid_solve(const OcpSpec& spec) {
  const int n = spec.horizon;
  REQUIRE(n <= 2);
  OracleResult best;
  std::vector<double> lo(n, spec.params.u_min), hi(n, spec.params.u_max);
  grid_scan(spec, lo, hi, 1e-2, best);
  if (!best.feasible) return best;
  std::vector<double> lo2(n), hi2(n);
  for (int i = 0; i < n; ++i) {
    lo2[i] = std::max(spec.params.u_min, best.inputs[i] - 1.5e-2);
    hi2[i] = std::min(spec.params.u_max, best.inputs[i] + 1.5e-2);
  }
  OracleResult refined = best;
  grid_scan(spec, lo2, hi2, 1e-3, refined);
  return refined;
}

}  // namespace

TEST_CASE("cost evaluation") {
  OcpSpec spec = base_spec(1);
  attach_zero_neighbor(spec);

  SUBCASE("all-zero sequences cost nothing") {
    std::vector<double> u{0.0};
    std::vector<Eigen::Vector3d> xs{Eigen::Vector3d::Zero(),
                                    Eigen::Vector3d::Zero()};
    CHECK(evaluate_cost(spec, u, xs) == 0.0);
  }

  SUBCASE("hand-computed single-step instance") {
    // h=0.05, tau=0.5, q=2, r=0.5, q_coop=1, P=I:
    //   stage  : 2*6 + 0.5*0.25 + 1*(0.64+4+1.21) = 17.975
    //   x1     : [1.1, 1.95, -0.85], terminal = 5.735
    spec.weights = CostWeights::from_q_r(2.0, 0.5);
    spec.terminal.P = Eigen::Matrix3d::Identity();
    spec.neighbors[0].states[0] = {0.2, 0.0, 0.1};
    std::vector<Eigen::Vector3d> xs{{1.0, 2.0, -1.0}, {1.1, 1.95, -0.85}};
    std::vector<double> u{0.5};
    CHECK(evaluate_cost(spec, u, xs) ==
          doctest::Approx(23.71).epsilon(1e-12));
  }

  SUBCASE("state-weight scaling is exact") {
    rng::Stream s(8, {30});
    std::vector<double> u{s.uniform(-1, 1)};
    std::vector<Eigen::Vector3d> xs{
        {s.uniform(-1, 1), s.uniform(-1, 1), s.uniform(-1, 1)},
        {s.uniform(-1, 1), s.uniform(-1, 1), s.uniform(-1, 1)}};
    spec.terminal.P = Eigen::Matrix3d::Zero();  // isolate the q terms
    const double base_q = 3.0, alpha = 2.5;
    spec.weights = CostWeights::from_q_r(base_q, 1.0);
    const double c1 = evaluate_cost(spec, u, xs) - 1.0 * u[0] * u[0];
    spec.weights = CostWeights::from_q_r(alpha * base_q, 1.0);
    const double c2 = evaluate_cost(spec, u, xs) - 1.0 * u[0] * u[0];
    CHECK(c2 == doctest::Approx(alpha * c1).epsilon(1e-12));
  }

  SUBCASE("length mismatch is rejected") {
    std::vector<double> u{0.0, 0.0};
    std::vector<Eigen::Vector3d> xs{Eigen::Vector3d::Zero(),
                                    Eigen::Vector3d::Zero()};
    CHECK_THROWS_AS(evaluate_cost(spec, u, xs), std::invalid_argument);
  }
}

TEST_CASE("solver: origin is optimal when everything is centered") {
  OcpSpec spec = base_spec(5);
  attach_zero_neighbor(spec);
  spec.x0.setZero();
  const OcpSolution sol = solve_ocp(spec);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.cost == doctest::Approx(0.0).epsilon(1e-12));
  for (double u : sol.inputs) CHECK(std::abs(u) < 1e-12);
}

TEST_CASE("solver: initial state outside the tube is infeasible") {
  OcpSpec spec = base_spec(3);
  spec.x0 = Eigen::Vector3d{1.0, 1.0, 1.0}.normalized() *
            (spec.params.state_radius() * 1.01);
  const OcpSolution sol = solve_ocp(spec);
  CHECK(sol.status == SolveStatus::Infeasible);
  CHECK(sol.infeasibility > 0.0);
}

TEST_CASE("solver: agrees with the grid oracle on a two-step instance") {
  OcpSpec spec = base_spec(2);
  attach_zero_neighbor(spec);
  spec.x0 = {0.4, -0.3, 0.1};
  spec.prev_input = 0.0;

  const OcpSolution sol = solve_ocp(spec);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const OracleResult grid = grid_solve(spec);
  REQUIRE(grid.feasible);
  CHECK(sol.cost <= grid.cost + 1e-6 * std::max(1.0, grid.cost));
  CHECK(grid.cost - sol.cost <= 1e-3 * std::max(1.0, grid.cost));
}

TEST_CASE("solver: random small instances match the oracle") {
  rng::Stream s(23, {31});
  int feasible_seen = 0, infeasible_seen = 0;
  for (int trial = 0; trial < 12; ++trial) {
    OcpSpec spec = base_spec(1 + (trial % 2));
    attach_zero_neighbor(spec);
    const bool make_infeasible = trial % 4 == 3;
    if (make_infeasible) {
      Eigen::Vector3d dir{s.uniform(-1, 1), s.uniform(-1, 1), s.uniform(-1, 1)};
      spec.x0 = dir.normalized() * spec.params.state_radius() * 1.05;
    } else {
      spec.x0 = {s.uniform(-0.5, 0.5), s.uniform(-0.5, 0.5),
                 s.uniform(-0.3, 0.3)};
      spec.prev_input = s.uniform(-0.3, 0.3);
    }
    const OcpSolution sol = solve_ocp(spec);
    const OracleResult grid = grid_solve(spec);
    if (grid.feasible) {
      ++feasible_seen;
      REQUIRE(sol.status == SolveStatus::Optimal);
      CHECK(sol.cost <= grid.cost + 1e-6 * std::max(1.0, grid.cost));
      CHECK(grid.cost - sol.cost <= 1e-3 * std::max(1.0, grid.cost));
    } else {
      ++infeasible_seen;
      CHECK(sol.status == SolveStatus::Infeasible);
    }
  }
  CHECK(feasible_seen > 0);
  CHECK(infeasible_seen > 0);
}

TEST_CASE("solver: relaxing constraints never increases the optimum") {
  rng::Stream s(29, {32});
  for (int trial = 0; trial < 25; ++trial) {
    OcpSpec spec = base_spec(4);
    attach_zero_neighbor(spec);
    spec.x0 = {s.uniform(-0.6, 0.6), s.uniform(-0.6, 0.6), s.uniform(-0.3, 0.3)};
    const OcpSolution tight = solve_ocp(spec);
    if (tight.status != SolveStatus::Optimal) continue;

    OcpSpec relaxed = spec;
    relaxed.consistency_level *= 4.0;
    relaxed.params.u_min *= 2.0;
    relaxed.params.u_max *= 2.0;
    const OcpSolution loose = solve_ocp(relaxed);
    REQUIRE(loose.status == SolveStatus::Optimal);
    CHECK(loose.cost <= tight.cost + 1e-7 * std::max(1.0, tight.cost));
  }
}

TEST_CASE("solver: optimal predictions end inside the terminal set") {
  rng::Stream s(31, {33});
  for (int trial = 0; trial < 20; ++trial) {
    OcpSpec spec = base_spec(8);
    attach_zero_neighbor(spec);
    spec.x0 = {s.uniform(-0.8, 0.8), s.uniform(-0.8, 0.8), s.uniform(-0.4, 0.4)};
    const OcpSolution sol = solve_ocp(spec);
    if (sol.status != SolveStatus::Optimal) continue;
    CHECK(spec.terminal.p_norm(sol.states.back()) <=
          spec.terminal.epsilon + 1e-6);
    CHECK(sol.max_violation <= 1e-6);
  }
}

TEST_CASE("broadcast construction") {
  OcpSpec spec = base_spec(6);
  attach_zero_neighbor(spec);
  spec.x0 = {0.5, -0.2, 0.1};
  const OcpSolution sol = solve_ocp(spec);
  REQUIRE(sol.status == SolveStatus::Optimal);

  SUBCASE("prefix spanning the packet leaves no feedback tail") {
    const BroadcastTrajectory bc =
        build_broadcast(sol, spec.terminal, spec.matrices, 100, 6);
    CHECK(bc.horizon_used == 6);
    CHECK(bc.full_len == 6);
    for (int i = 0; i < 6; ++i) CHECK(bc.inputs[i] == sol.inputs[i]);
  }
  SUBCASE("tail extends with the feedback law and replays") {
    const BroadcastTrajectory bc =
        build_broadcast(sol, spec.terminal, spec.matrices, 100, 12);
    CHECK(bc.full_len == 12);
    CHECK(broadcast_replays(bc, spec.matrices, 1e-9));
    CHECK(bc.inputs[6] ==
          doctest::Approx(double(spec.terminal.K * bc.states[6])).epsilon(1e-12));
  }
  SUBCASE("zero terminal state gives an identically zero tail") {
    OcpSolution zero_sol = sol;
    zero_sol.inputs.assign(6, 0.0);
    zero_sol.states.assign(7, Eigen::Vector3d::Zero());
    const BroadcastTrajectory bc =
        build_broadcast(zero_sol, spec.terminal, spec.matrices, 0, 10);
    for (int i = 6; i < 10; ++i) {
      CHECK(bc.inputs[i] == 0.0);
      CHECK(bc.states[i + 1].norm() == 0.0);
    }
  }
  SUBCASE("non-optimal solutions are refused") {
    OcpSolution bad = sol;
    bad.status = SolveStatus::Infeasible;
    CHECK_THROWS_AS(build_broadcast(bad, spec.terminal, spec.matrices, 0, 10),
                    std::invalid_argument);
  }
}

TEST_CASE("candidate shifting") {
  OcpSpec spec = base_spec(6);
  attach_zero_neighbor(spec);
  spec.x0 = {0.5, -0.2, 0.1};
  const OcpSolution sol = solve_ocp(spec);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const BroadcastTrajectory bc =
      build_broadcast(sol, spec.terminal, spec.matrices, 50, 10);

  SUBCASE("unit shift reproduces the packet shifted by one") {
    const auto cand =
        shift_candidate(bc, 50, 51, spec.terminal, spec.matrices, 6);
    REQUIRE(cand.has_value());
    for (int i = 0; i < 6; ++i)
      CHECK(cand->inputs[i] == doctest::Approx(bc.inputs[i + 1]).epsilon(1e-15));
  }
  SUBCASE("zero shift reproduces the packet prefix") {
    const auto cand =
        shift_candidate(bc, 50, 50, spec.terminal, spec.matrices, 6);
    REQUIRE(cand.has_value());
    for (int i = 0; i < 6; ++i) CHECK(cand->inputs[i] == bc.inputs[i]);
  }
  SUBCASE("candidate states replay under the nominal model") {
    const auto cand =
        shift_candidate(bc, 50, 53, spec.terminal, spec.matrices, 12);
    REQUIRE(cand.has_value());
    for (int i = 0; i < 12; ++i) {
      const Eigen::Vector3d next =
          step_nominal(cand->states[i], cand->inputs[i], spec.matrices);
      CHECK((next - cand->states[i + 1]).norm() < 1e-12);
    }
  }
  SUBCASE("shift past the packet is unavailable") {
    CHECK_FALSE(
        shift_candidate(bc, 50, 61, spec.terminal, spec.matrices, 6).has_value());
  }
}

TEST_CASE("recursive-feasibility condition") {
  VehicleParams p;
  p.h = 0.05;
  p.w_bound = 0.2;

  SUBCASE("worst accumulated disturbance") {
    TerminalIngredients ing;
    ing.gamma = 2.0;
    ing.epsilon = 1.0;
    ing.P = 4.0 * Eigen::Matrix3d::Identity();  // lambda_max(sqrt(P)) = 2
    p.state_bound << 50.0, 1e-6, 1e-6;          // radius 50
    const FeasibilityReport rep =
        check_feasibility_condition(ing, p, 30, 0.2, 5);
    CHECK(rep.delta_max == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(rep.bound_terminal == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep.bound_tube == doctest::Approx(0.2 * 50.0 / 30.0).epsilon(1e-6));
    CHECK(rep.pass);
  }
  SUBCASE("disturbance-free case always passes") {
    p.w_bound = 0.0;
    const TerminalIngredients ing = synthesize_terminal(p, 10.0, 1.0);
    const FeasibilityReport rep =
        check_feasibility_condition(ing, p, 30, 0.2, 50);
    CHECK(rep.delta_max == 0.0);
    CHECK(rep.pass);
  }
}
