#pragma once

#include <cmath>

#include <Eigen/Core>

namespace wasep {

template <typename Scalar>
using GridVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Values of a function on the uniform periodic grid u_j = j/m, j = 0..m-1.
using Grid = GridVector<double>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double compressibility(double rho) { return rho * (1.0 - rho); }

/// Reduce u to the fundamental domain [0, 1).
inline double wrap_unit(double u) {
  double w = u - std::floor(u);
  return w >= 1.0 ? 0.0 : w;
}

/// Bond differences (f_{j+1} - f_j) / h, one entry per bond (j, j+1) with periodic wrap.
/// Works column-wise, so a matrix whose columns are grid functions is accepted.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>
forward_difference(const Eigen::MatrixBase<Derived>& f, typename Derived::Scalar h) {
  const Eigen::Index m = f.rows();
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> out(m, f.cols());
  out.topRows(m - 1) = (f.bottomRows(m - 1) - f.topRows(m - 1)) / h;
  out.row(m - 1) = (f.row(0) - f.row(m - 1)) / h;
  return out;
}

/// Second-order periodic Laplacian (f_{j+1} - 2 f_j + f_{j-1}) / h^2, column-wise.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>
laplacian(const Eigen::MatrixBase<Derived>& f, typename Derived::Scalar h) {
  const Eigen::Index m = f.rows();
  const auto inv_h2 = 1 / (h * h);
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> out(m, f.cols());
  out.middleRows(1, m - 2) =
      (f.bottomRows(m - 2) - 2 * f.middleRows(1, m - 2) + f.topRows(m - 2)) * inv_h2;
  out.row(0) = (f.row(1) - 2 * f.row(0) + f.row(m - 1)) * inv_h2;
  out.row(m - 1) = (f.row(0) - 2 * f.row(m - 1) + f.row(m - 2)) * inv_h2;
  return out;
}

/// Second-order central first derivative, column-wise.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>
central_gradient(const Eigen::MatrixBase<Derived>& f, typename Derived::Scalar h) {
  const Eigen::Index m = f.rows();
  const auto inv_2h = 1 / (2 * h);
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> out(m, f.cols());
  out.middleRows(1, m - 2) = (f.bottomRows(m - 2) - f.topRows(m - 2)) * inv_2h;
  out.row(0) = (f.row(1) - f.row(m - 1)) * inv_2h;
  out.row(m - 1) = (f.row(0) - f.row(m - 2)) * inv_2h;
  return out;
}

/// Fourth-order central first derivative (-f_{j+2} + 8 f_{j+1} - 8 f_{j-1} + f_{j-2}) / 12h.
template <typename Derived>
GridVector<typename Derived::Scalar> central_gradient4(const Eigen::MatrixBase<Derived>& f,
                                                       typename Derived::Scalar h) {
  const Eigen::Index m = f.size();
  GridVector<typename Derived::Scalar> out(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto fp1 = f((j + 1) % m), fp2 = f((j + 2) % m);
    const auto fm1 = f((j + m - 1) % m), fm2 = f((j + m - 2) % m);
    out(j) = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h);
  }
  return out;
}

/// Riemann sum h * sum_j f_j, exact for trigonometric polynomials of degree < m.
template <typename Derived>
typename Derived::Scalar torus_integral(const Eigen::MatrixBase<Derived>& f) {
  return f.sum() / static_cast<typename Derived::Scalar>(f.size());
}

/// Periodic four-point (cubic Lagrange) interpolation of grid data at u.
template <typename Derived>
typename Derived::Scalar interpolate_cubic(const Eigen::MatrixBase<Derived>& f, double u) {
  const Eigen::Index m = f.size();
  const double x = wrap_unit(u) * static_cast<double>(m);
  const auto j = static_cast<Eigen::Index>(std::floor(x));
  const double a = x - static_cast<double>(j);
  const auto at = [&](Eigen::Index k) { return f(((j + k) % m + m) % m); };
  const double w0 = -a * (a - 1) * (a - 2) / 6;
  const double w1 = (a + 1) * (a - 1) * (a - 2) / 2;
  const double w2 = -(a + 1) * a * (a - 2) / 2;
  const double w3 = (a + 1) * a * (a - 1) / 6;
  return w0 * at(-1) + w1 * at(0) + w2 * at(1) + w3 * at(2);
}

/// Samples a callable on the grid u_j = j/m.
template <typename Fn>
Grid sample_on_grid(Fn&& fn, Eigen::Index m) {
  Grid out(m);
  for (Eigen::Index j = 0; j < m; ++j) out(j) = fn(static_cast<double>(j) / static_cast<double>(m));
  return out;
}

}  // namespace wasep
