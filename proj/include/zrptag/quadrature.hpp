#pragma once

#include <array>
#include <cmath>

namespace zrptag::quad {

// Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr std::array<double, 3> gl3_x{-0.7745966692414833770359, 0.0, 0.7745966692414833770359};
inline constexpr std::array<double, 3> gl3_w{0.5555555555555555555556, 0.8888888888888888888889,
                                             0.5555555555555555555556};

inline constexpr std::array<double, 5> gl5_x{-0.9061798459386639927976, -0.5384693101056830910363, 0.0,
                                             0.5384693101056830910363, 0.9061798459386639927976};
inline constexpr std::array<double, 5> gl5_w{0.2369268850561890875143, 0.4786286704993664680413,
                                             0.5688888888888888888889, 0.4786286704993664680413,
                                             0.2369268850561890875143};

template <class F, std::size_t K>
double gauss_legendre(F&& f, double a, double b, const std::array<double, K>& x,
                      const std::array<double, K>& w) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t i = 0; i < K; ++i) s += w[i] * f(c + h * x[i]);
  return s * h;
}

template <class F>
double gl5(F&& f, double a, double b) {
  return gauss_legendre(f, a, b, gl5_x, gl5_w);
}

/// Composite five-point Gauss-Legendre on `cells` equal cells.
template <class F>
double composite_gl5(F&& f, double a, double b, int cells) {
  const double h = (b - a) / cells;
  double s = 0.0;
  for (int i = 0; i < cells; ++i) s += gl5(f, a + i * h, a + (i + 1) * h);
  return s;
}

/// Adaptive Simpson with absolute tolerance.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol, int depth = 40) {
  auto rec = [&](auto&& self, double a0, double b0, double fa, double fm, double fb, double whole,
                 double eps, int d) -> double {
    const double m = 0.5 * (a0 + b0);
    const double lm = 0.5 * (a0 + m), rm = 0.5 * (m + b0);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a0) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b0 - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (d <= 0 || std::abs(diff) <= 15.0 * eps) return left + right + diff / 15.0;
    return self(self, a0, m, fa, flm, fm, left, 0.5 * eps, d - 1) +
           self(self, m, b0, fm, frm, fb, right, 0.5 * eps, d - 1);
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return rec(rec, a, b, fa, fm, fb, whole, tol, depth);
}

}  // namespace zrptag::quad
