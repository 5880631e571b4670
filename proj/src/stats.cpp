#include "dnsfr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dnsfr {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ (stream * 0xd1b54a32d192ed03ULL));
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

GaussianSampler::GaussianSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov) : mean_(std::move(mean)) {
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size()) {
    throw std::invalid_argument("GaussianSampler: covariance shape mismatch");
  }
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::domain_error("GaussianSampler: eigendecomposition failed");
  const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
  if (eig.eigenvalues().size() > 0 && eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw std::domain_error("GaussianSampler: covariance is not positive semidefinite");
  }
  root_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::VectorXd GaussianSampler::draw(Rng& rng) const {
  Eigen::VectorXd z(mean_.size());
  standard_normals(rng, z);
  return mean_ + root_ * z;
}

void standard_normals(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = normal(rng);
}

}  // namespace dnsfr
