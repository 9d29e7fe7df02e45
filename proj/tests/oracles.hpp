#pragma once

// Independent reference integrators for the tests. Deliberately plain:
// composite Simpson on a fixed grid, nothing shared with the library.

#include <cmath>
#include <functional>
#include <numbers>

namespace oracle {

inline double simpson(const std::function<double(double)>& f, double lo, double hi, int panels = 20000) {
  if (panels % 2) ++panels;
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace oracle
