#include "dnsfr/nelson_siegel.hpp"

#include <cmath>
#include <stdexcept>

namespace dnsfr {

Eigen::RowVector3d loading_row(double tau, double lambda) {
  if (!(tau > 0.0) || !(lambda > 0.0)) {
    throw std::invalid_argument("loading_row: tau and lambda must be positive");
  }
  const double x = lambda * tau;
  const double decay = std::exp(-x);
  // -expm1(-x) keeps (1 - e^{-x}) / x accurate for small x.
  const double slope = -std::expm1(-x) / x;
  return {1.0, slope, slope - decay};
}

NsLoadingMatrix loading_matrix(const MaturityGrid& grid, double lambda) {
  NsLoadingMatrix out;
  out.lambda = lambda;
  out.grid = grid;
  out.matrix.resize(static_cast<Eigen::Index>(grid.size()), 3);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.matrix.row(static_cast<Eigen::Index>(i)) = loading_row(grid[i], lambda);
  }
  return out;
}

}  // namespace dnsfr
