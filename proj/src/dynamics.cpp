#include "platoon/dynamics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace platoon {

namespace {
void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("vehicle params: " + what);
}
}  // namespace

void VehicleParams::validate() const {
  require(std::isfinite(h) && h > 0.0, "h must be > 0");
  require(std::isfinite(tau_motor) && tau_motor > h, "tau_motor must be > h");
  require(std::isfinite(u_min) && std::isfinite(u_max) && u_min < 0.0 && u_max > 0.0,
          "u_min < 0 < u_max required");
  require(std::isfinite(du_min) && std::isfinite(du_max) && du_min < 0.0 && du_max > 0.0,
          "du_min < 0 < du_max required");
  require(state_bound.allFinite() && (state_bound.array() > 0.0).all(),
          "state_bound must be positive and finite");
  require(std::isfinite(w_bound) && w_bound >= 0.0, "w_bound must be >= 0");
}

SystemMatrices build_matrices(const VehicleParams& params) {
  params.validate();
  SystemMatrices m;
  m.A << 1.0, params.h, 0.0,
         0.0, 1.0, params.h,
         0.0, 0.0, 1.0 - params.h / params.tau_motor;
  m.B << 0.0, 0.0, params.h / params.tau_motor;
  m.D << 0.0, 0.0, params.h;
  return m;
}

VehicleState step_true(const VehicleState& state, double u, double w,
                       const SystemMatrices& m) {
  return VehicleState::from_vec(m.A * state.vec() + m.B * u + m.D * w);
}

Eigen::Vector3d step_nominal(const Eigen::Vector3d& state, double u,
                             const SystemMatrices& m) {
  return m.A * state + m.B * u;
}

ErrorState step_nominal(const ErrorState& state, double u,
                        const SystemMatrices& m) {
  return ErrorState::from_vec(step_nominal(state.vec(), u, m));
}

ErrorState to_error_state(int j, const VehicleState& own,
                          const VehicleState& leader, double d) {
  return {own.p - leader.p + static_cast<double>(j) * d,
          own.v - leader.v,
          own.a - leader.a};
}

bool state_in_box(const ErrorState& e, const VehicleParams& params) {
  const Eigen::Vector3d x = e.vec();
  return (x.array().abs() <= params.state_bound.array()).all();
}

bool input_in_box(double u, const VehicleParams& params) {
  return u >= params.u_min && u <= params.u_max;
}

bool increment_in_box(double du, const VehicleParams& params) {
  return du >= params.du_min && du <= params.du_max;
}

}  // namespace platoon
