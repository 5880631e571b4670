#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dnsfr {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a(std::string_view text);

/// Seed for sub-stream `stream` of a run seeded with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `p` in [0, 1]; `values` need not be sorted.
double percentile(std::vector<double> values, double p);

/// Draws from N(mean, cov) for a positive semidefinite `cov`.
class GaussianSampler {
 public:
  /// Throws std::domain_error when `cov` has an eigenvalue below -1e-10 * scale.
  GaussianSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov);

  [[nodiscard]] Eigen::VectorXd draw(Rng& rng) const;
  [[nodiscard]] const Eigen::MatrixXd& root() const { return root_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd root_;  // root * root^T == cov
};

/// Fills `out` with independent standard normals.
void standard_normals(Rng& rng, Eigen::Ref<Eigen::VectorXd> out);

}  // namespace dnsfr
