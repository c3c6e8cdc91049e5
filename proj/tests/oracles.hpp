#pragma once

// Independent reference computations used by the tests.  Nothing here calls
// into the library.

#include <cmath>
#include <numbers>

namespace oracle {

// K_1(x) by its ascending series (Abramowitz & Stegun 9.6.11).
inline double bessel_k1_series(double x) {
  const double q = 0.25 * x * x;
  double term = 0.5 * x;  // (x/2)^{2k+1} / (k! (k+1)!) at k = 0
  double i1 = 0.0;
  double tail = 0.0;
  double psi_k1 = -std::numbers::egamma;       // psi(k+1)
  double psi_k2 = 1.0 - std::numbers::egamma;  // psi(k+2)
  double factor = 1.0;                          // (x^2/4)^k / (k! (k+1)!)
  for (int k = 0; k < 200; ++k) {
    i1 += term;
    tail += (psi_k1 + psi_k2) * factor;
    term *= q / ((k + 1.0) * (k + 2.0));
    factor *= q / ((k + 1.0) * (k + 2.0));
    psi_k1 += 1.0 / (k + 1.0);
    psi_k2 += 1.0 / (k + 2.0);
  }
  return 1.0 / x + std::log(0.5 * x) * i1 - 0.25 * x * tail;
}

// K_1(x) = int_0^inf exp(-x cosh u) cosh u du, by Simpson's rule; accurate
// where the ascending series cancels badly.
inline double bessel_k1_integral(double x) {
  const double upper = std::acosh(1.0 + 60.0 / x);
  const int n = 20000;
  const double h = upper / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::exp(-x * (std::cosh(u) - 1.0)) * std::cosh(u);
  }
  return std::exp(-x) * s * h / 3.0;
}

// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F&& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// 1-d Dirichlet heat kernel on (0, a) by its sine series.
inline double heat_1d_eigen(double a, double s, double u, double v, int modes = 4000) {
  double sum = 0.0;
  for (int n = 1; n <= modes; ++n) {
    const double k = n * std::numbers::pi / a;
    sum += std::exp(-0.5 * k * k * s) * std::sin(k * u) * std::sin(k * v);
  }
  return 2.0 / a * sum;
}

}  // namespace oracle
