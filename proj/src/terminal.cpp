#include "platoon/terminal.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace platoon {

namespace {

double dare_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                     const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  const Eigen::MatrixXd next =
      A.transpose() * P * A -
      A.transpose() * P * B * S.ldlt().solve(B.transpose() * P * A) + Q;
  return (next - P).norm();
}

}  // namespace

Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const auto n = A.rows();
  Eigen::LLT<Eigen::MatrixXd> r_llt(R);
  if (r_llt.info() != Eigen::Success)
    throw SynthesisError("dare: R must be positive definite");

  // Doubling iteration: each pass squares the effective horizon, so the
  // fixed point is reached in a few dozen iterations even near the
  // stability margin.
  Eigen::MatrixXd A_k = A;
  Eigen::MatrixXd G_k = B * r_llt.solve(B.transpose());
  Eigen::MatrixXd H_k;
  Eigen::MatrixXd H_next = Q;
  constexpr int kMaxIter = 10000;
  int iter = 0;
  do {
    if (++iter > kMaxIter) throw SynthesisError("dare: no convergence");
    H_k = H_next;
    const Eigen::MatrixXd W =
        Eigen::MatrixXd::Identity(n, n) + G_k * H_k;
    const auto w_lu = W.partialPivLu();
    const Eigen::MatrixXd V1 = w_lu.solve(A_k);
    const Eigen::MatrixXd V2 = w_lu.solve(G_k.transpose()).transpose();
    G_k += A_k * V2 * A_k.transpose();
    H_next = H_k + V1.transpose() * H_k * A_k;
    A_k *= V1;
  } while ((H_next - H_k).norm() > 1e-12 * std::max(1.0, H_next.norm()));

  if (dare_residual(A, B, Q, R, H_next) > 1e-8)
    throw SynthesisError("dare: residual above tolerance");
  return H_next;
}

Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& P, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw SynthesisError("lqr_gain: R + B^T P B singular");
  return -llt.solve(B.transpose() * P * A);
}

double terminal_radius(const Eigen::RowVector3d& K, const Eigen::Matrix3d& P,
                       const VehicleParams& params) {
  const Eigen::Matrix3d P_inv = P.llt().solve(Eigen::Matrix3d::Identity());
  auto level_for = [&](const Eigen::RowVector3d& row, double bound) {
    const double gain = std::sqrt(row * P_inv * row.transpose());
    if (gain < 1e-14) return std::numeric_limits<double>::infinity();
    return bound / gain;
  };

  double gamma = level_for(K, std::min(params.u_max, -params.u_min));
  for (int i = 0; i < 3; ++i) {
    Eigen::RowVector3d e = Eigen::RowVector3d::Zero();
    e(i) = 1.0;
    gamma = std::min(gamma, level_for(e, params.state_bound(i)));
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw SynthesisError("terminal_radius: nonpositive level");
  return gamma;
}

InvarianceReport verify_invariance(const TerminalIngredients& ing,
                                   const SystemMatrices& m,
                                   const Eigen::Matrix3d& Q, double R,
                                   int samples, std::uint64_t seed) {
  InvarianceReport report;
  const Eigen::Matrix3d A_cl = m.A + m.B * ing.K;
  const Eigen::Matrix3d phi = Q + ing.K.transpose() * R * ing.K;

  const Eigen::Matrix3d lhs =
      -(A_cl.transpose() * ing.P * A_cl - ing.P + phi);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(lhs);
  report.matrix_min_eig = es.eigenvalues().minCoeff();

  // P^{-1/2} maps the unit ball onto the level set.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> esp(ing.P);
  const Eigen::Matrix3d P_inv_sqrt =
      esp.eigenvectors() *
      esp.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
      esp.eigenvectors().transpose();

  rng::Stream stream(seed, {0x1e4aull});
  report.worst_margin = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    Eigen::Vector3d dir;
    do {
      dir = {stream.uniform(-1, 1), stream.uniform(-1, 1), stream.uniform(-1, 1)};
    } while (dir.norm() < 1e-6);
    dir.normalize();
    // Mix boundary and interior points; the boundary is the binding case.
    const double radius = (s % 4 == 0) ? stream.canonical() * ing.gamma
                                       : ing.gamma;
    const Eigen::Vector3d x = radius * (P_inv_sqrt * dir);
    const Eigen::Vector3d x_next = A_cl * x;
    const double lvl = ing.p_norm(x);
    const double lvl_next = ing.p_norm(x_next);
    const double margin =
        lvl * lvl - lvl_next * lvl_next - x.dot(phi * x);
    report.worst_margin = std::min(report.worst_margin, margin);
    if (lvl_next > lvl + 1e-12 || margin < -1e-9) {
      report.ok = false;
      report.counterexample = x;
    }
  }
  if (report.matrix_min_eig < -1e-9) report.ok = false;
  return report;
}

TerminalIngredients synthesize_terminal(const VehicleParams& params, double q,
                                        double r, double epsilon_frac) {
  params.validate();
  if (!(q > 0.0 && r > 0.0))
    throw SynthesisError("synthesize: weights must be positive");
  if (!(epsilon_frac > 0.0 && epsilon_frac < 1.0))
    throw SynthesisError("synthesize: epsilon_frac must be in (0,1)");

  const SystemMatrices m = build_matrices(params);
  const Eigen::Matrix3d Q = q * Eigen::Matrix3d::Identity();
  const Eigen::MatrixXd R = r * Eigen::MatrixXd::Identity(1, 1);

  TerminalIngredients ing;
  ing.P = solve_dare(m.A, m.B, Q, R);
  ing.K = lqr_gain(m.A, m.B, ing.P, R);

  const Eigen::Matrix3d A_cl = m.A + m.B * ing.K;
  const double rho_cl =
      A_cl.eigenvalues().cwiseAbs().maxCoeff();
  if (rho_cl >= 1.0) throw SynthesisError("synthesize: closed loop unstable");

  ing.gamma = terminal_radius(ing.K, ing.P, params);
  ing.epsilon = epsilon_frac * ing.gamma;
  ing.decrease = Q + ing.K.transpose() * r * ing.K;
  return ing;
}

}  // namespace platoon
