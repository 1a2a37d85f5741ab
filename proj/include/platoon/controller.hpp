#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "platoon/broadcast.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/terminal.hpp"

namespace platoon {

/// Scalar cost weights: Q = q*I, R = r, cooperative weight q_coop*I.
struct CostWeights {
  double q = 1.0;
  double r = 1.0;
  double q_coop = 0.5;

  static CostWeights from_q_r(double q, double r) { return {q, r, 0.5 * q}; }
};

/// Neighbor prediction aligned to the trigger step: states[i] is the
/// neighbor's predicted error state i steps ahead, for i in 0..N.
struct NeighborTrajectory {
  std::vector<Eigen::Vector3d> states;
};

/// One vehicle's optimization instance at a trigger step.
struct OcpSpec {
  Eigen::Vector3d x0 = Eigen::Vector3d::Zero();
  int horizon = 1;
  CostWeights weights;
  TerminalIngredients terminal;
  std::vector<NeighborTrajectory> neighbors;
  double prev_input = 0.0;        ///< anchor of the i=0 increment constraint
  double tube_scaling = 0.2;      ///< shrinking-tube parameter, in (0,1)
  double consistency_level = 0.0; ///< per-step cooperative bound
  VehicleParams params;
  SystemMatrices matrices;

  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

struct OcpSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<double> inputs;             ///< length N
  std::vector<Eigen::Vector3d> states;    ///< length N+1, replayed nominal
  double cost = 0.0;
  double max_violation = 0.0;   ///< worst primal constraint violation
  double stationarity = 0.0;    ///< KKT stationarity residual
  double infeasibility = 0.0;   ///< phase-1 certificate when Infeasible
  int newton_iters = 0;
};

/// Stage cost sum over i = 0..N-1 of q*||x_i||^2 + r*u_i^2 +
/// sum_q q_coop*||x_i - b_q(i)||^2, plus terminal ||x_N||^2_P.
double evaluate_cost(const OcpSpec& spec, std::span<const double> inputs,
                     std::span<const Eigen::Vector3d> states);

/// Minimizes evaluate_cost subject to the shrinking tube on ||x_i||, the
/// input and increment boxes, the per-step cooperative bound, and the
/// terminal level-set constraint. Convex QCQP over the input sequence,
/// solved by a log-barrier interior method with a phase-1 feasibility solve.
OcpSolution solve_ocp(const OcpSpec& spec,
                      std::span<const double> warm_start = {});

/// Packet assembly: optimal prefix, then feedback-law tail out to full_len.
BroadcastTrajectory build_broadcast(const OcpSolution& solution,
                                    const TerminalIngredients& ing,
                                    const SystemMatrices& m, int origin_step,
                                    int full_len);

struct Candidate {
  std::vector<double> inputs;
  std::vector<Eigen::Vector3d> states;  ///< inputs.size() + 1, nominal rollout
};

/// Shifts a previous packet to a later trigger: reuse the packet's inputs
/// where they still cover the window, extend with the feedback law beyond.
/// Returns nullopt when the shift exceeds the packet length.
std::optional<Candidate> shift_candidate(const BroadcastTrajectory& prev,
                                         int prev_trigger, int new_trigger,
                                         const TerminalIngredients& ing,
                                         const SystemMatrices& m, int length);

struct FeasibilityReport {
  double delta_max = 0.0;
  double bound_terminal = 0.0;
  double bound_tube = 0.0;
  bool pass = false;
};

/// Sufficient condition for recursive feasibility: worst accumulated
/// disturbance ||D||*w_bound*outage_bound against the terminal-margin and
/// tube-margin bounds.
FeasibilityReport check_feasibility_condition(const TerminalIngredients& ing,
                                              const VehicleParams& params,
                                              int horizon, double tube_scaling,
                                              int outage_bound);

}  // namespace platoon
