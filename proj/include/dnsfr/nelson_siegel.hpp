#pragma once

#include <Eigen/Dense>

#include "dnsfr/market_data.hpp"

namespace dnsfr {

/// Decay rate per month used throughout unless configured otherwise.
inline constexpr double kDefaultLambda = 0.0609;

/// Level, slope and curvature loadings at maturity `tau` (months):
/// (1, (1 - e^{-lambda tau}) / (lambda tau), (1 - e^{-lambda tau}) / (lambda tau) - e^{-lambda tau}).
/// Throws std::invalid_argument unless tau > 0 and lambda > 0.
Eigen::RowVector3d loading_row(double tau, double lambda);

/// N x 3 factor-loading matrix over a maturity grid.
struct NsLoadingMatrix {
  Eigen::MatrixXd matrix;
  double lambda = kDefaultLambda;
  MaturityGrid grid = MaturityGrid::canonical();
};

NsLoadingMatrix loading_matrix(const MaturityGrid& grid, double lambda);

}  // namespace dnsfr
