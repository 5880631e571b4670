#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dnsfr/market_data.hpp"

namespace dnsfr {

/// RBF kernel k(x, y) = exp(-gamma * |x - y|^2), with gamma = 1 / (2 sigma^2).
struct KernelConfig {
  double gamma = 0.1;
};

/// Kernel PCA over the maturity-indexed time series of a reference panel.
///
/// Samples are maturities (rows of `training_samples`, one per tenor) and
/// features are time points. The Gram matrix is used raw, without centering.
struct KpcaModel {
  Eigen::MatrixXd K;             // N x N Gram matrix
  Eigen::VectorXd eigenvalues;   // Q, descending, positive
  Eigen::MatrixXd Z;             // N x Q orthonormal eigenvectors
  Eigen::MatrixXd A;             // N x Q scores, Z diag(sqrt(eigenvalues))
  Eigen::MatrixXd W;             // N x Q projection weights, A diag(1 / eigenvalues)
  KernelConfig config;
  Eigen::MatrixXd training_samples;  // N x T; empty when fitted from a bare Gram matrix
  std::vector<double> tenors;        // maturity grid of the training panel

  [[nodiscard]] Eigen::Index components() const { return eigenvalues.size(); }
  /// Retained share of trace(K).
  [[nodiscard]] double retained_energy() const;
};

/// Factor scores U (T x Q): U(t, q) = sum_i Y_t(tau_i) Z(i, q).
struct FactorPanel {
  std::vector<MonthStamp> dates;
  Eigen::MatrixXd values;
};

/// Relative cutoff below which eigenvalues count as numerically zero.
inline constexpr double kEigenTolerance = 1e-10;

double rbf_kernel(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                  KernelConfig config);

/// Gram matrix between the rows of `samples`.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& samples, KernelConfig config);

/// Gram matrix between the tenor columns of a complete panel (N x N).
Eigen::MatrixXd kernel_matrix(const YieldPanel& panel, KernelConfig config);

/// Eigendecomposition of a symmetric Gram matrix keeping Q components. Each
/// eigenvector is signed so that its largest-magnitude entry is positive.
KpcaModel fit_kpca(const Eigen::MatrixXd& K, Eigen::Index Q);

/// Builds the Gram matrix of a complete panel and fits it.
KpcaModel fit_kpca(const YieldPanel& panel, KernelConfig config, Eigen::Index Q);

/// Scores of a new maturity series: sum_i W(i, q) k(x, sample_i).
Eigen::VectorXd project_out_of_sample(const KpcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& sample);

/// Time-indexed factors of a panel on the model's maturity grid (Y Z).
FactorPanel extract_factors(const KpcaModel& model, const YieldPanel& panel);

/// Functional coefficient curves over the maturity grid: Gamma Z^T.
Eigen::MatrixXd reconstruct_functional_coefficients(const Eigen::MatrixXd& gamma, const KpcaModel& model);

/// Approximate pre-image of the projection of training sample `index` using the
/// RBF fixed-point iteration started at the sample itself. Returns nullopt when
/// the iteration breaks down (vanishing or non-finite normalizer).
std::optional<Eigen::VectorXd> preimage(const KpcaModel& model, Eigen::Index index,
                                        int max_iterations = 500, double tolerance = 1e-8);

/// Mean squared pre-image reconstruction error over the training samples;
/// +infinity when any pre-image fails.
double preimage_error(const KpcaModel& model);

struct GammaGrid {
  double first = 0.001;
  double last = 1.0;
  double step = 0.001;

  [[nodiscard]] std::vector<double> points() const;
};

struct GammaSearchResult {
  KernelConfig best;
  std::vector<double> gammas;
  std::vector<double> errors;  // +infinity where the fit or pre-image failed
};

/// Exhaustive search for the gamma with minimal pre-image error; ties go to
/// the smaller gamma.
GammaSearchResult grid_search_gamma_detailed(const YieldPanel& panel, Eigen::Index Q, const GammaGrid& grid = {});

KernelConfig grid_search_gamma(const YieldPanel& panel, Eigen::Index Q, const GammaGrid& grid = {});

}  // namespace dnsfr
