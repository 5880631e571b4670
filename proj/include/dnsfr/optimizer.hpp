#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace dnsfr {

struct SimplexOptions {
  int max_evaluations = 50000;
  /// Converged once every vertex lies within this distance of the best vertex.
  double diameter_tolerance = 1e-8;
  double initial_step = 0.2;
};

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  /// Best objective value after each iteration (non-increasing).
  std::vector<double> best_trace;
};

/// Nelder-Mead minimization with dimension-adaptive coefficients. Non-finite
/// objective values are treated as +infinity. The returned point is the best
/// one ever evaluated, so its value never exceeds f(x0).
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          const SimplexOptions& options = {});

}  // namespace dnsfr
