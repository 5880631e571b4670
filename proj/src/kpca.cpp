#include "dnsfr/kpca.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dnsfr {
namespace {

Eigen::MatrixXd tenor_samples(const YieldPanel& panel) {
  if (!panel.complete()) throw DataError("kernel PCA needs a complete panel (no missing cells)");
  return panel.values.transpose();
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      D(i, j) = D(j, i) = (samples.row(i) - samples.row(j)).squaredNorm();
    }
  }
  return D;
}

}  // namespace

double KpcaModel::retained_energy() const {
  const double trace = K.trace();
  return trace > 0.0 ? eigenvalues.sum() / trace : 0.0;
}

double rbf_kernel(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                  KernelConfig config) {
  if (x.size() != y.size()) throw std::invalid_argument("rbf_kernel: length mismatch");
  return std::exp(-config.gamma * (x - y).squaredNorm());
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& samples, KernelConfig config) {
  if (!(config.gamma > 0.0)) throw std::invalid_argument("kernel_matrix: gamma must be positive");
  Eigen::MatrixXd K = (-config.gamma * squared_distances(samples).array()).exp().matrix();
  K.diagonal().setOnes();
  return K;
}

Eigen::MatrixXd kernel_matrix(const YieldPanel& panel, KernelConfig config) {
  return kernel_matrix(tenor_samples(panel), config);
}

KpcaModel fit_kpca(const Eigen::MatrixXd& K, Eigen::Index Q) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n || n == 0) throw std::invalid_argument("fit_kpca: kernel matrix must be square");
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("fit_kpca: kernel matrix is not symmetric");
  }
  if (Q < 1) throw std::invalid_argument("fit_kpca: need at least one component");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  if (eig.info() != Eigen::Success) throw std::runtime_error("fit_kpca: eigendecomposition failed");
  // Eigen returns ascending order.
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

  const double cutoff = kEigenTolerance * std::max(values(0), 0.0);
  Eigen::Index rank = 0;
  while (rank < n && values(rank) > cutoff && values(rank) > 0.0) ++rank;
  if (Q > rank) {
    throw std::invalid_argument("fit_kpca: requested " + std::to_string(Q) +
                                " components but numerical rank is " + std::to_string(rank));
  }

  KpcaModel m;
  m.K = K;
  m.eigenvalues = values.head(Q);
  m.Z = vectors.leftCols(Q);
  for (Eigen::Index q = 0; q < Q; ++q) {
    Eigen::Index arg = 0;
    m.Z.col(q).cwiseAbs().maxCoeff(&arg);
    if (m.Z(arg, q) < 0.0) m.Z.col(q) *= -1.0;
  }
  m.A = m.Z * m.eigenvalues.cwiseSqrt().asDiagonal();
  m.W = m.A * m.eigenvalues.cwiseInverse().asDiagonal();
  return m;
}

KpcaModel fit_kpca(const YieldPanel& panel, KernelConfig config, Eigen::Index Q) {
  Eigen::MatrixXd samples = tenor_samples(panel);
  KpcaModel m = fit_kpca(kernel_matrix(samples, config), Q);
  m.config = config;
  m.training_samples = std::move(samples);
  m.tenors = panel.grid.tenors();
  return m;
}

Eigen::VectorXd project_out_of_sample(const KpcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& sample) {
  if (model.training_samples.rows() == 0) {
    throw std::invalid_argument("project_out_of_sample: model has no training samples");
  }
  if (sample.size() != model.training_samples.cols()) {
    throw std::invalid_argument("project_out_of_sample: dimension mismatch");
  }
  Eigen::VectorXd k(model.training_samples.rows());
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    k(i) = rbf_kernel(sample, model.training_samples.row(i).transpose(), model.config);
  }
  return model.W.transpose() * k;
}

FactorPanel extract_factors(const KpcaModel& model, const YieldPanel& panel) {
  if (panel.grid.tenors() != model.tenors) {
    throw std::invalid_argument("extract_factors: panel grid differs from the kPCA training grid");
  }
  if (!panel.complete()) throw DataError("extract_factors: panel has missing cells");
  return FactorPanel{panel.dates, panel.values * model.Z};
}

Eigen::MatrixXd reconstruct_functional_coefficients(const Eigen::MatrixXd& gamma, const KpcaModel& model) {
  if (gamma.cols() != model.Z.cols()) {
    throw std::invalid_argument("reconstruct_functional_coefficients: Gamma must have Q columns");
  }
  return gamma * model.Z.transpose();
}

std::optional<Eigen::VectorXd> preimage(const KpcaModel& model, Eigen::Index index, int max_iterations,
                                        double tolerance) {
  const Eigen::MatrixXd& X = model.training_samples;
  const Eigen::VectorXd x0 = X.row(index).transpose();
  const Eigen::VectorXd scores = project_out_of_sample(model, x0);
  // Projection expressed in the span of the training feature vectors.
  const Eigen::VectorXd coeff = model.W * scores;

  Eigen::VectorXd z = x0;
  Eigen::VectorXd weights(X.rows());
  for (int it = 0; it < max_iterations; ++it) {
    for (Eigen::Index j = 0; j < X.rows(); ++j) {
      weights(j) = coeff(j) * std::exp(-model.config.gamma * (z - X.row(j).transpose()).squaredNorm());
    }
    const double denom = weights.sum();
    if (!std::isfinite(denom) || std::abs(denom) < 1e-300) return std::nullopt;
    Eigen::VectorXd next = X.transpose() * weights / denom;
    if (!next.allFinite()) return std::nullopt;
    const double change = (next - z).norm();
    const double size = std::max(z.norm(), 1e-300);
    z = std::move(next);
    if (change / size < tolerance) break;
  }
  return z;
}

double preimage_error(const KpcaModel& model) {
  const Eigen::MatrixXd& X = model.training_samples;
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    auto z = preimage(model, i);
    if (!z) return std::numeric_limits<double>::infinity();
    total += (X.row(i).transpose() - *z).squaredNorm();
  }
  return total / static_cast<double>(X.rows());
}

std::vector<double> GammaGrid::points() const {
  if (!(step > 0.0) || !(first > 0.0) || last < first) return {};
  const auto count = static_cast<long>(std::floor((last - first) / step + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) out.push_back(first + static_cast<double>(k) * step);
  return out;
}

GammaSearchResult grid_search_gamma_detailed(const YieldPanel& panel, Eigen::Index Q, const GammaGrid& grid) {
  GammaSearchResult result;
  result.gammas = grid.points();
  if (result.gammas.empty()) throw std::invalid_argument("grid_search_gamma: empty gamma grid");

  const Eigen::MatrixXd samples = tenor_samples(panel);
  const Eigen::MatrixXd D = squared_distances(samples);
  result.errors.assign(result.gammas.size(), std::numeric_limits<double>::infinity());

  double best_error = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best;
  for (std::size_t g = 0; g < result.gammas.size(); ++g) {
    const KernelConfig config{result.gammas[g]};
    Eigen::MatrixXd K = (-config.gamma * D.array()).exp().matrix();
    K.diagonal().setOnes();
    KpcaModel model;
    try {
      model = fit_kpca(K, Q);
    } catch (const std::invalid_argument&) {
      continue;
    }
    model.config = config;
    model.training_samples = samples;
    model.tenors = panel.grid.tenors();
    const double err = preimage_error(model);
    result.errors[g] = err;
    // Strict comparison keeps the smaller gamma on ties.
    if (err < best_error) {
      best_error = err;
      best = g;
    }
  }
  if (!best) throw std::runtime_error("grid_search_gamma: every grid point failed");
  result.best = KernelConfig{result.gammas[*best]};
  return result;
}

KernelConfig grid_search_gamma(const YieldPanel& panel, Eigen::Index Q, const GammaGrid& grid) {
  return grid_search_gamma_detailed(panel, Q, grid).best;
}

}  // namespace dnsfr
