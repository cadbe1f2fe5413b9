#pragma once

// Closed-form proximal operators of
//   phi_c(z)  = 1/2 (|z| + c)^2                 (scalar, fixed c >= 0)
//   phi(z)    = 1/2 (|z1| + gamma ||z2||)^2     (joint, z = [z1; z2])
// The joint operator drives every per-sample z-update of the ADMM solver.

#include <Eigen/Dense>

#include <cmath>

#include "rigid/types.hpp"

namespace rigid {

template <class T>
constexpr T sign(T x) {
  return static_cast<T>((T(0) < x) - (x < T(0)));
}

/// argmin_z lambda/2 (|z| + c)^2 + 1/2 (z - z')^2.
template <class T>
T prox_scalar(T z_prime, T c, T lambda) {
  const T thresh = lambda * c;
  if (std::abs(z_prime) <= thresh) return T(0);
  return (z_prime - sign(z_prime) * thresh) / (T(1) + lambda);
}

struct ProxInput {
  double z1 = 0.0;
  Vector z2;
  double lambda = 0.0;
  double gamma = 0.0;
};

struct ProxResult {
  double z1 = 0.0;
  Vector z2;
};

/// In-place joint prox: on return (z1, z2) hold the minimizer of
///   lambda/2 (|z1| + gamma ||z2||)^2 + 1/2 (z1 - z1')^2 + 1/2 ||z2 - z2'||^2
/// where (z1', z2') are the values on entry. z2 may be empty.
template <class Derived>
void prox_joint_inplace(double& z1, Eigen::MatrixBase<Derived>& z2, double lambda, double gamma) {
  if (lambda == 0.0) return;
  if (gamma == 0.0 || z2.size() == 0) {
    z1 /= 1.0 + lambda;
    return;
  }
  const double a = std::abs(z1);
  const double norm2 = z2.norm();
  const double lg = lambda * gamma;
  const double lg2 = lg * gamma;
  const double lhs = lg * norm2;

  if (lhs >= (1.0 + lg2) * a) {
    // z1 is zeroed; z2 is shrunk radially
    z1 = 0.0;
    z2 /= 1.0 + lg2;
  } else if (lhs >= lg * lg * a / (lambda + 1.0)) {
    const double denom = 1.0 + lambda + lg2;
    const double new_z1 = ((1.0 + lg2) * z1 - lg * sign(z1) * norm2) / denom;
    // a > 0 and norm2 > 0 in this branch
    const double scale = ((lambda + 1.0) * norm2 - lg * a) / (denom * norm2);
    z1 = new_z1;
    z2 *= scale;
  } else {
    z1 /= 1.0 + lambda;
    z2.setZero();
  }
}

inline ProxResult prox_joint(const ProxInput& in) {
  require(in.lambda >= 0.0 && in.gamma >= 0.0, ErrorCode::InvalidArgument,
          "prox_joint needs lambda >= 0 and gamma >= 0");
  ProxResult out{in.z1, in.z2};
  prox_joint_inplace(out.z1, out.z2, in.lambda, in.gamma);
  return out;
}

/// Value of the joint prox objective at (z1, z2).
template <class D1, class D2>
double prox_objective(double z1, const Eigen::MatrixBase<D1>& z2, double z1_prime,
                      const Eigen::MatrixBase<D2>& z2_prime, double lambda, double gamma) {
  const double pen = std::abs(z1) + gamma * z2.norm();
  return 0.5 * lambda * pen * pen + 0.5 * (z1 - z1_prime) * (z1 - z1_prime) +
         0.5 * (z2 - z2_prime).squaredNorm();
}

}  // namespace rigid
