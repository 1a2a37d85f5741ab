#pragma once

#include <Eigen/Dense>

namespace platoon {

/// Physical parameters shared by every vehicle in the platoon.
///
/// `state_bound` is the per-component box for the error state; its Euclidean
/// norm is the radius used by the shrinking-tube constraint.
struct VehicleParams {
  double h = 0.05;          ///< sampling period [s]
  double tau_motor = 0.5;   ///< motor time constant [s]
  double u_min = -4.5;      ///< input lower bound [m/s^2]
  double u_max = 3.0;       ///< input upper bound [m/s^2]
  double du_min = -1.0;     ///< per-step input decrement bound [m/s^2]
  double du_max = 1.0;      ///< per-step input increment bound [m/s^2]
  Eigen::Vector3d state_bound{15.0, 8.0, 5.0};
  double w_bound = 0.2;     ///< additive disturbance magnitude bound

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Euclidean radius of the error-state box (sup of ||x|| over the box).
  double state_radius() const { return state_bound.norm(); }
};

/// Absolute kinematic triple of one vehicle.
struct VehicleState {
  double p = 0.0;  ///< position [m]
  double v = 0.0;  ///< velocity [m/s]
  double a = 0.0;  ///< acceleration [m/s^2]

  Eigen::Vector3d vec() const { return {p, v, a}; }
  static VehicleState from_vec(const Eigen::Vector3d& x) {
    return {x(0), x(1), x(2)};
  }
};

/// Deviation of a vehicle from its slot behind the leader.
struct ErrorState {
  double ep = 0.0;  ///< spacing error [m]
  double ev = 0.0;  ///< velocity error [m/s]
  double ea = 0.0;  ///< acceleration error [m/s^2]

  Eigen::Vector3d vec() const { return {ep, ev, ea}; }
  static ErrorState from_vec(const Eigen::Vector3d& x) {
    return {x(0), x(1), x(2)};
  }
  double norm() const { return vec().norm(); }
};

/// Discrete-time model matrices for the longitudinal dynamics.
struct SystemMatrices {
  Eigen::Matrix3d A;
  Eigen::Vector3d B;
  Eigen::Vector3d D;
};

/// A = [[1,h,0],[0,1,h],[0,0,1-h/tau]], B = [0,0,h/tau]^T, D = [0,0,h]^T.
SystemMatrices build_matrices(const VehicleParams& params);

/// One step of the true plant: A*x + B*u + D*w (w is the effective scalar
/// disturbance entering the acceleration channel).
VehicleState step_true(const VehicleState& state, double u, double w,
                       const SystemMatrices& m);

/// One step of the disturbance-free error model: A*x + B*u.
ErrorState step_nominal(const ErrorState& state, double u,
                        const SystemMatrices& m);
Eigen::Vector3d step_nominal(const Eigen::Vector3d& state, double u,
                             const SystemMatrices& m);

/// Error state of follower j (j >= 1) relative to the leader at spacing d:
/// [p_j - p_0 + j*d, v_j - v_0, a_j - a_0].
ErrorState to_error_state(int j, const VehicleState& own,
                          const VehicleState& leader, double d);

// Constraint-set membership. All sets are closed: boundary values belong.
bool state_in_box(const ErrorState& e, const VehicleParams& params);
bool input_in_box(double u, const VehicleParams& params);
bool increment_in_box(double du, const VehicleParams& params);

}  // namespace platoon
