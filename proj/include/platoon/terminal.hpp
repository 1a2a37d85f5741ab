#pragma once

#include <Eigen/Dense>

#include "platoon/dynamics.hpp"
#include "platoon/rng.hpp"

namespace platoon {

/// Terminal feedback gain, terminal weight, and the invariant level set
/// the controller relies on. `decrease` is the stage-cost matrix the
/// level-set contraction is certified against (Q + K^T R K).
struct TerminalIngredients {
  Eigen::RowVector3d K = Eigen::RowVector3d::Zero();
  Eigen::Matrix3d P = Eigen::Matrix3d::Identity();
  double gamma = 0.0;    ///< invariant level: ||x||_P <= gamma
  double epsilon = 0.0;  ///< terminal-constraint level, in (0, gamma)
  Eigen::Matrix3d decrease = Eigen::Matrix3d::Zero();

  double p_norm(const Eigen::Vector3d& x) const {
    return std::sqrt(x.dot(P * x));
  }
};

/// Thrown when terminal synthesis cannot produce valid ingredients.
struct SynthesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Solves A^T P A - A^T P B (R + B^T P B)^-1 B^T P A + Q = P by the
/// structure-preserving doubling iteration. Requires Q, R positive definite
/// and (A, B) stabilizable; the returned P has Riccati residual <= 1e-8 in
/// Frobenius norm or SynthesisError is thrown.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// K = -(R + B^T P B)^-1 B^T P A.
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& P, const Eigen::MatrixXd& R);

/// Largest gamma such that every x with ||x||_P <= gamma satisfies
/// K x in [u_min, u_max] and x inside the state box. Closed form: minimum
/// over constraint rows c of bound / ||P^{-1/2} c^T||.
double terminal_radius(const Eigen::RowVector3d& K, const Eigen::Matrix3d& P,
                       const VehicleParams& params);

struct InvarianceReport {
  bool ok = true;
  double worst_margin = 0.0;           ///< most negative decrease slack seen
  double matrix_min_eig = 0.0;         ///< min eig of -(Acl^T P Acl - P + Q + K^T R K)
  Eigen::Vector3d counterexample = Eigen::Vector3d::Zero();
};

/// Samples points on and inside the gamma level set and checks that the
/// closed loop A + B K stays inside and decreases ||x||_P^2 by at least
/// ||x||^2_{Q + K^T R K} (up to 1e-9 slack).
InvarianceReport verify_invariance(const TerminalIngredients& ing,
                                   const SystemMatrices& m,
                                   const Eigen::Matrix3d& Q, double R,
                                   int samples = 10000,
                                   std::uint64_t seed = 7);

/// Full synthesis from baseline weights Q = q*I, R = r. epsilon is set to
/// epsilon_frac * gamma.
TerminalIngredients synthesize_terminal(const VehicleParams& params, double q,
                                        double r, double epsilon_frac = 0.5);

}  // namespace platoon
