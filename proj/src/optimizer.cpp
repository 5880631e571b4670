#include "dnsfr/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dnsfr {

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          const SimplexOptions& options) {
  const Eigen::Index n = x0.size();
  SimplexResult result;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++result.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  if (n == 0) {
    result.x = x0;
    result.value = eval(x0);
    result.converged = true;
    return result;
  }

  // Gao & Han (2012) coefficients.
  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / dn;
  const double gamma = 0.75 - 1.0 / (2.0 * dn);
  const double delta = 1.0 - 1.0 / dn;

  std::vector<Eigen::VectorXd> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  values[0] = eval(x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    simplex[i + 1](i) += options.initial_step;
    values[i + 1] = eval(simplex[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<Eigen::VectorXd> s(n + 1);
    std::vector<double> v(n + 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      s[k] = std::move(simplex[order[k]]);
      v[k] = values[order[k]];
    }
    simplex = std::move(s);
    values = std::move(v);
  };

  sort_simplex();
  while (true) {
    double diameter = 0.0;
    for (Eigen::Index i = 1; i <= n; ++i) diameter = std::max(diameter, (simplex[i] - simplex[0]).norm());
    if (diameter < options.diameter_tolerance) {
      result.converged = true;
      break;
    }
    if (result.evaluations >= options.max_evaluations) break;
    ++result.iterations;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= dn;

    const Eigen::VectorXd& worst = simplex[n];
    const Eigen::VectorXd xr = centroid + alpha * (centroid - worst);
    const double fr = eval(xr);
    if (fr < values[0]) {
      const Eigen::VectorXd xe = centroid + beta * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[n] = xe;
        values[n] = fe;
      } else {
        simplex[n] = xr;
        values[n] = fr;
      }
    } else if (fr < values[n - 1]) {
      simplex[n] = xr;
      values[n] = fr;
    } else {
      bool shrink = false;
      if (fr < values[n]) {
        const Eigen::VectorXd xc = centroid + gamma * (xr - centroid);
        const double fc = eval(xc);
        if (fc <= fr) {
          simplex[n] = xc;
          values[n] = fc;
        } else {
          shrink = true;
        }
      } else {
        const Eigen::VectorXd xc = centroid - gamma * (centroid - worst);
        const double fc = eval(xc);
        if (fc < values[n]) {
          simplex[n] = xc;
          values[n] = fc;
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (Eigen::Index i = 1; i <= n; ++i) {
          simplex[i] = simplex[0] + delta * (simplex[i] - simplex[0]);
          values[i] = eval(simplex[i]);
        }
      }
    }
    sort_simplex();
    result.best_trace.push_back(values[0]);
  }
  result.x = simplex[0];
  result.value = values[0];
  return result;
}

}  // namespace dnsfr
