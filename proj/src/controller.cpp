#include "platoon/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace platoon {

void OcpSpec::validate() const {
  params.validate();
  if (horizon < 1) throw std::invalid_argument("ocp: horizon must be >= 1");
  if (!x0.allFinite()) throw std::invalid_argument("ocp: x0 must be finite");
  if (!(weights.q > 0.0 && weights.r > 0.0 && weights.q_coop >= 0.0))
    throw std::invalid_argument("ocp: weights must be positive");
  if (!(tube_scaling > 0.0 && tube_scaling < 1.0))
    throw std::invalid_argument("ocp: tube_scaling must be in (0,1)");
  if (!(terminal.gamma > 0.0 && terminal.epsilon > 0.0 &&
        terminal.epsilon < terminal.gamma))
    throw std::invalid_argument("ocp: terminal levels invalid");
  if (!neighbors.empty() && !(consistency_level > 0.0))
    throw std::invalid_argument("ocp: consistency_level must be > 0");
  for (const auto& nb : neighbors)
    if (static_cast<int>(nb.states.size()) < horizon + 1)
      throw std::invalid_argument("ocp: neighbor trajectory too short");
  if (!std::isfinite(prev_input))
    throw std::invalid_argument("ocp: prev_input must be finite");
}

double evaluate_cost(const OcpSpec& spec, std::span<const double> inputs,
                     std::span<const Eigen::Vector3d> states) {
  const int n = spec.horizon;
  if (static_cast<int>(inputs.size()) != n ||
      static_cast<int>(states.size()) != n + 1)
    throw std::invalid_argument("evaluate_cost: sequence length mismatch");

  double cost = 0.0;
  for (int i = 0; i < n; ++i) {
    cost += spec.weights.q * states[i].squaredNorm();
    cost += spec.weights.r * inputs[i] * inputs[i];
    for (const auto& nb : spec.neighbors)
      cost += spec.weights.q_coop * (states[i] - nb.states[i]).squaredNorm();
  }
  cost += states[n].dot(spec.terminal.P * states[n]);
  return cost;
}

namespace {

using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

// One inequality f(u) <= 0, either a shifted-ball quadratic
// f = ||b + M u||^2 + c or a linear form f = g^T u + c. `scale` normalizes
// the barrier terms; violations are always reported unscaled.
struct Constraint {
  bool quadratic = false;
  Mat3X M;
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  Eigen::VectorXd g;
  double c = 0.0;
  double scale = 1.0;

  double value(const Eigen::VectorXd& u) const {
    if (quadratic) return (b + M * u).squaredNorm() + c;
    return g.dot(u) + c;
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const {
    if (quadratic) return 2.0 * M.transpose() * (b + M * u);
    return g;
  }
};

struct Condensed {
  int n = 0;
  std::vector<Mat3X> G;              // x(i) = a[i] + G[i] u
  std::vector<Eigen::Vector3d> a;
  Eigen::MatrixXd H;                 // objective u^T H u + g^T u + c
  Eigen::VectorXd g;
  double c = 0.0;
  std::vector<Constraint> cons;
  double const_violation = 0.0;      // worst violation among u-independent terms
};

Condensed condense(const OcpSpec& spec) {
  const int n = spec.horizon;
  const auto& m = spec.matrices;
  const int n_c = static_cast<int>(spec.neighbors.size());

  Condensed cd;
  cd.n = n;
  cd.G.resize(n + 1);
  cd.a.resize(n + 1);
  cd.G[0] = Mat3X::Zero(3, n);
  cd.a[0] = spec.x0;
  for (int i = 0; i < n; ++i) {
    cd.G[i + 1] = m.A * cd.G[i];
    cd.G[i + 1].col(i) = m.B;
    cd.a[i + 1] = m.A * cd.a[i];
  }

  // Objective.
  cd.H = Eigen::MatrixXd::Zero(n, n);
  cd.g = Eigen::VectorXd::Zero(n);
  cd.c = 0.0;
  const double w_state = spec.weights.q + spec.weights.q_coop * n_c;
  for (int i = 0; i < n; ++i) {
    cd.H.selfadjointView<Eigen::Lower>().rankUpdate(cd.G[i].transpose(),
                                                    w_state);
    Eigen::Vector3d lin = spec.weights.q * cd.a[i];
    cd.c += spec.weights.q * cd.a[i].squaredNorm();
    for (const auto& nb : spec.neighbors) {
      lin += spec.weights.q_coop * (cd.a[i] - nb.states[i]);
      cd.c += spec.weights.q_coop * (cd.a[i] - nb.states[i]).squaredNorm();
    }
    cd.g += 2.0 * cd.G[i].transpose() * lin;
    cd.H(i, i) += spec.weights.r;
  }
  const Eigen::Matrix3d Pchol_l =
      Eigen::LLT<Eigen::Matrix3d>(spec.terminal.P).matrixL();
  const Mat3X MN = Pchol_l.transpose() * cd.G[n];
  const Eigen::Vector3d bN = Pchol_l.transpose() * cd.a[n];
  cd.H.selfadjointView<Eigen::Lower>().rankUpdate(MN.transpose(), 1.0);
  cd.g += 2.0 * MN.transpose() * bN;
  cd.c += bN.squaredNorm();
  cd.H = cd.H.selfadjointView<Eigen::Lower>();

  // Constraints. u-independent pieces (i = 0 tube and cooperative bound)
  // are checked here and reported through const_violation.
  const double radius = spec.params.state_radius();
  cd.const_violation =
      std::max(cd.const_violation, spec.x0.norm() - radius);

  if (n_c > 0) {
    double coop0 = 0.0;
    for (const auto& nb : spec.neighbors)
      coop0 += spec.weights.q_coop * (spec.x0 - nb.states[0]).squaredNorm();
    cd.const_violation =
        std::max(cd.const_violation, coop0 - n_c * spec.consistency_level);
  }

  for (int i = 1; i < n; ++i) {
    const double r_i = (1.0 - spec.tube_scaling * i / n) * radius;
    Constraint tube;
    tube.quadratic = true;
    tube.M = cd.G[i];
    tube.b = cd.a[i];
    tube.c = -r_i * r_i;
    tube.scale = std::max(1.0, r_i * r_i);
    cd.cons.push_back(std::move(tube));
  }

  for (int i = 0; i < n; ++i) {
    Constraint hi, lo;
    hi.g = Eigen::VectorXd::Zero(n);
    hi.g(i) = 1.0;
    hi.c = -spec.params.u_max;
    hi.scale = std::max(1.0, std::abs(spec.params.u_max));
    lo.g = Eigen::VectorXd::Zero(n);
    lo.g(i) = -1.0;
    lo.c = spec.params.u_min;
    lo.scale = std::max(1.0, std::abs(spec.params.u_min));
    cd.cons.push_back(std::move(hi));
    cd.cons.push_back(std::move(lo));
  }

  for (int i = 0; i < n; ++i) {
    Constraint hi, lo;
    hi.g = Eigen::VectorXd::Zero(n);
    lo.g = Eigen::VectorXd::Zero(n);
    hi.g(i) = 1.0;
    lo.g(i) = -1.0;
    double anchor = 0.0;
    if (i == 0) {
      anchor = spec.prev_input;
    } else {
      hi.g(i - 1) = -1.0;
      lo.g(i - 1) = 1.0;
    }
    hi.c = -anchor - spec.params.du_max;
    lo.c = anchor + spec.params.du_min;
    hi.scale = std::max(1.0, std::abs(spec.params.du_max));
    lo.scale = std::max(1.0, std::abs(spec.params.du_min));
    cd.cons.push_back(std::move(hi));
    cd.cons.push_back(std::move(lo));
  }

  if (n_c > 0) {
    // sum_q q_coop ||x_i - b_q||^2 <= n_c * zeta, completed to ball form.
    const double w = spec.weights.q_coop;
    for (int i = 1; i < n; ++i) {
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      double sq = 0.0;
      for (const auto& nb : spec.neighbors) {
        mean += nb.states[i];
        sq += nb.states[i].squaredNorm();
      }
      mean /= n_c;
      Constraint coop;
      coop.quadratic = true;
      const double s = std::sqrt(w * n_c);
      coop.M = s * cd.G[i];
      coop.b = s * (cd.a[i] - mean);
      coop.c = w * sq - w * n_c * mean.squaredNorm() -
               n_c * spec.consistency_level;
      coop.scale = std::max(1.0, n_c * spec.consistency_level);
      cd.cons.push_back(std::move(coop));
    }
  }

  Constraint term;
  term.quadratic = true;
  term.M = MN;
  term.b = bN;
  term.c = -spec.terminal.epsilon * spec.terminal.epsilon;
  term.scale = std::max(1.0, spec.terminal.epsilon * spec.terminal.epsilon);
  cd.cons.push_back(std::move(term));

  return cd;
}

double max_scaled_value(const std::vector<Constraint>& cons,
                        const Eigen::VectorXd& u) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& c : cons) worst = std::max(worst, c.value(u) / c.scale);
  return worst;
}

double max_violation(const std::vector<Constraint>& cons,
                     const Eigen::VectorXd& u) {
  double worst = 0.0;
  for (const auto& c : cons) worst = std::max(worst, c.value(u));
  return worst;
}

struct NewtonBudget {
  int total = 0;
  static constexpr int kMax = 4000;
  bool exhausted() const { return total >= kMax; }
};

// Centering step for min t*f0 + barrier over the current point. Returns
// false when the iteration budget runs out before the decrement converges.
bool center_phase2(const Condensed& cd, double t, Eigen::VectorXd& u,
                   NewtonBudget& budget) {
  const int n = cd.n;
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd grad(n);

  auto barrier_value = [&](const Eigen::VectorXd& z) {
    double val = t * (z.dot(cd.H * z) + cd.g.dot(z));
    for (const auto& c : cd.cons) {
      const double f = c.value(z) / c.scale;
      if (f >= 0.0) return std::numeric_limits<double>::infinity();
      val -= std::log(-f);
    }
    return val;
  };

  for (int iter = 0; iter < 80; ++iter) {
    if (budget.exhausted()) return false;
    ++budget.total;

    grad = t * (2.0 * cd.H * u + cd.g);
    hess = 2.0 * t * cd.H;
    for (const auto& c : cd.cons) {
      const double f = c.value(u) / c.scale;
      const Eigen::VectorXd gc = c.gradient(u) / c.scale;
      hess.selfadjointView<Eigen::Lower>().rankUpdate(gc, 1.0 / (f * f));
      if (c.quadratic)
        hess.selfadjointView<Eigen::Lower>().rankUpdate(
            c.M.transpose(), 2.0 / (-f) / c.scale);
      grad += gc / (-f);
    }
    hess = hess.selfadjointView<Eigen::Lower>();

    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      hess.diagonal().array() += 1e-8 * (1.0 + hess.diagonal().maxCoeff());
      step = -hess.ldlt().solve(grad);
      if (!step.allFinite()) return false;
    }
    const double decrement2 = -grad.dot(step);
    if (decrement2 * 0.5 < 1e-12) return true;

    const double base = barrier_value(u);
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd trial = u + alpha * step;
      if (barrier_value(trial) <= base + 0.25 * alpha * grad.dot(step)) {
        u = trial;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) return true;  // stalled at numerical precision
  }
  return true;
}

// Phase-1: minimize s subject to f_m(u) <= s. Returns the final (u, s).
std::pair<Eigen::VectorXd, double> phase1(const Condensed& cd,
                                          Eigen::VectorXd u,
                                          NewtonBudget& budget) {
  const int n = cd.n;
  double s = max_scaled_value(cd.cons, u);
  s += std::max(1e-3, 0.1 * std::abs(s));

  auto barrier_value = [&](const Eigen::VectorXd& z, double sz, double t) {
    double val = t * sz;
    for (const auto& c : cd.cons) {
      const double gap = sz - c.value(z) / c.scale;
      if (gap <= 0.0) return std::numeric_limits<double>::infinity();
      val -= std::log(gap);
    }
    return val;
  };

  const double m_cons = static_cast<double>(cd.cons.size());
  double t = 1.0;
  while (m_cons / t > 1e-10) {
    for (int iter = 0; iter < 80; ++iter) {
      if (budget.exhausted()) return {u, s};
      ++budget.total;

      Eigen::VectorXd grad_u = Eigen::VectorXd::Zero(n);
      Eigen::MatrixXd hess_uu = Eigen::MatrixXd::Zero(n, n);
      Eigen::VectorXd hess_us = Eigen::VectorXd::Zero(n);
      double grad_s = t;
      double hess_ss = 0.0;
      for (const auto& c : cd.cons) {
        const double gap = s - c.value(u) / c.scale;
        const Eigen::VectorXd gc = c.gradient(u) / c.scale;
        grad_u += gc / gap;
        grad_s -= 1.0 / gap;
        hess_uu.selfadjointView<Eigen::Lower>().rankUpdate(gc,
                                                           1.0 / (gap * gap));
        if (c.quadratic)
          hess_uu.selfadjointView<Eigen::Lower>().rankUpdate(
              c.M.transpose(), 2.0 / gap / c.scale);
        hess_us -= gc / (gap * gap);
        hess_ss += 1.0 / (gap * gap);
      }
      hess_uu = hess_uu.selfadjointView<Eigen::Lower>();

      Eigen::MatrixXd hess(n + 1, n + 1);
      hess.topLeftCorner(n, n) = hess_uu;
      hess.topRightCorner(n, 1) = hess_us;
      hess.bottomLeftCorner(1, n) = hess_us.transpose();
      hess(n, n) = hess_ss;
      Eigen::VectorXd grad(n + 1);
      grad.head(n) = grad_u;
      grad(n) = grad_s;

      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      Eigen::VectorXd step = -ldlt.solve(grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        hess.diagonal().array() += 1e-8 * (1.0 + hess.diagonal().maxCoeff());
        step = -hess.ldlt().solve(grad);
        if (!step.allFinite()) return {u, s};
      }
      const double decrement2 = -grad.dot(step);
      if (decrement2 * 0.5 < 1e-12) break;

      const double base = barrier_value(u, s, t);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd trial_u = u + alpha * step.head(n);
        const double trial_s = s + alpha * step(n);
        if (barrier_value(trial_u, trial_s, t) <=
            base + 0.25 * alpha * grad.dot(step)) {
          u = trial_u;
          s = trial_s;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }
    if (s < -1e-7) return {u, s};  // strictly feasible point found
    t *= 20.0;
  }
  return {u, s};
}

std::vector<Eigen::Vector3d> rollout(const OcpSpec& spec,
                                     const Eigen::VectorXd& u) {
  std::vector<Eigen::Vector3d> states(spec.horizon + 1);
  states[0] = spec.x0;
  for (int i = 0; i < spec.horizon; ++i)
    states[i + 1] = step_nominal(states[i], u(i), spec.matrices);
  return states;
}

OcpSolution finish(const OcpSpec& spec, const Condensed& cd,
                   const Eigen::VectorXd& u, double t, int iters) {
  OcpSolution sol;
  sol.status = SolveStatus::Optimal;
  sol.inputs.assign(u.data(), u.data() + u.size());
  sol.states = rollout(spec, u);
  sol.cost = evaluate_cost(spec, sol.inputs, sol.states);
  sol.max_violation = std::max(0.0, max_violation(cd.cons, u));
  sol.newton_iters = iters;

  Eigen::VectorXd station = 2.0 * cd.H * u + cd.g;
  if (t > 0.0) {
    for (const auto& c : cd.cons) {
      const double f = c.value(u) / c.scale;
      const double lambda = 1.0 / (t * (-f) * c.scale);
      station += lambda * c.gradient(u);
    }
  }
  sol.stationarity =
      station.lpNorm<Eigen::Infinity>() /
      std::max(1.0, (2.0 * cd.H * u + cd.g).lpNorm<Eigen::Infinity>());
  return sol;
}

}  // namespace

OcpSolution solve_ocp(const OcpSpec& spec, std::span<const double> warm_start) {
  spec.validate();
  const Condensed cd = condense(spec);
  const int n = cd.n;

  if (cd.const_violation > 1e-9) {
    OcpSolution sol;
    sol.status = SolveStatus::Infeasible;
    sol.infeasibility = cd.const_violation;
    return sol;
  }

  NewtonBudget budget;

  // Unconstrained minimizer first: when no constraint is active it is the
  // exact optimum, which covers most cruise-phase solves.
  const Eigen::VectorXd u_free = -0.5 * cd.H.llt().solve(cd.g);
  if (u_free.allFinite() && max_scaled_value(cd.cons, u_free) <= -1e-10)
    return finish(spec, cd, u_free, 0.0, 0);

  // Interior starting point: warm candidate, the origin, or phase-1.
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  bool interior = max_scaled_value(cd.cons, u) < -1e-9;
  if (static_cast<int>(warm_start.size()) == n) {
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(warm_start.data(), n);
    if (max_scaled_value(cd.cons, w) < -1e-9) {
      u = std::move(w);
      interior = true;
    }
  }
  if (!interior) {
    auto [u1, s1] = phase1(cd, u, budget);
    if (s1 >= -1e-9) {
      OcpSolution sol;
      sol.status = SolveStatus::Infeasible;
      sol.infeasibility = std::max(max_violation(cd.cons, u1), 0.0);
      sol.newton_iters = budget.total;
      if (budget.exhausted()) sol.status = SolveStatus::NumericalFailure;
      return sol;
    }
    u = u1;
  }

  const double m_cons = static_cast<double>(cd.cons.size());
  double t = 1.0;
  while (m_cons / t > 1e-11) {
    if (!center_phase2(cd, t, u, budget)) {
      OcpSolution sol;
      sol.status = SolveStatus::NumericalFailure;
      sol.newton_iters = budget.total;
      return sol;
    }
    t *= 20.0;
  }
  return finish(spec, cd, u, t / 20.0, budget.total);
}

BroadcastTrajectory build_broadcast(const OcpSolution& solution,
                                    const TerminalIngredients& ing,
                                    const SystemMatrices& m, int origin_step,
                                    int full_len) {
  if (solution.status != SolveStatus::Optimal)
    throw std::invalid_argument("build_broadcast: solution not optimal");
  const int n_s = static_cast<int>(solution.inputs.size());
  if (full_len < n_s)
    throw std::invalid_argument("build_broadcast: full_len < horizon");

  BroadcastTrajectory bc;
  bc.origin_step = origin_step;
  bc.horizon_used = n_s;
  bc.full_len = full_len;
  bc.states = solution.states;
  bc.inputs = solution.inputs;
  bc.states.resize(full_len + 1);
  bc.inputs.resize(full_len);
  for (int i = n_s; i < full_len; ++i) {
    bc.inputs[i] = ing.K * bc.states[i];
    bc.states[i + 1] = step_nominal(bc.states[i], bc.inputs[i], m);
  }
  return bc;
}

bool broadcast_replays(const BroadcastTrajectory& bc, const SystemMatrices& m,
                       double tol) {
  if (static_cast<int>(bc.inputs.size()) != bc.full_len ||
      static_cast<int>(bc.states.size()) != bc.full_len + 1)
    return false;
  for (int i = 0; i < bc.full_len; ++i) {
    const Eigen::Vector3d next = step_nominal(bc.states[i], bc.inputs[i], m);
    if ((next - bc.states[i + 1]).lpNorm<Eigen::Infinity>() > tol)
      return false;
  }
  return true;
}

std::optional<Candidate> shift_candidate(const BroadcastTrajectory& prev,
                                         int prev_trigger, int new_trigger,
                                         const TerminalIngredients& ing,
                                         const SystemMatrices& m, int length) {
  const int shift = new_trigger - prev_trigger;
  if (shift < 0 || shift > prev.full_len || length < 1) return std::nullopt;

  Candidate cand;
  cand.inputs.resize(length);
  cand.states.resize(length + 1);
  cand.states[0] = prev.states[shift];
  for (int i = 0; i < length; ++i) {
    const int idx = shift + i;
    cand.inputs[i] = idx < prev.full_len
                         ? prev.inputs[idx]
                         : double(ing.K * cand.states[i]);
    cand.states[i + 1] = step_nominal(cand.states[i], cand.inputs[i], m);
  }
  return cand;
}

FeasibilityReport check_feasibility_condition(const TerminalIngredients& ing,
                                              const VehicleParams& params,
                                              int horizon, double tube_scaling,
                                              int outage_bound) {
  FeasibilityReport rep;
  rep.delta_max = params.h * params.w_bound * outage_bound;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(ing.P);
  rep.bound_terminal =
      (ing.gamma - ing.epsilon) / std::sqrt(es.eigenvalues().maxCoeff());
  rep.bound_tube = tube_scaling * params.state_radius() / horizon;
  rep.pass =
      rep.delta_max <= std::min(rep.bound_terminal, rep.bound_tube) + 1e-12;
  return rep;
}

}  // namespace platoon
