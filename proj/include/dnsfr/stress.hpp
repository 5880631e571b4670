#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnsfr/estimation.hpp"
#include "dnsfr/kpca.hpp"
#include "dnsfr/market_data.hpp"

namespace dnsfr {

/// Multiplies the reference yields at `tenors` over [start, end] by `multiplier`.
/// An absent end date leaves the shock in force to the end of the panel.
struct ShockSpec {
  std::string id;
  std::string description;
  MonthStamp start;
  std::optional<MonthStamp> end;
  std::vector<double> tenors;
  double multiplier = 2.0;

  /// Throws std::invalid_argument for an empty tenor set, a non-positive
  /// multiplier or an end before the start.
  void validate() const;
};

YieldPanel apply_shock(const YieldPanel& panel, const ShockSpec& spec);

/// Temporary shocks 1.1-1.4 (Jan 2015 to Dec 2015) and permanent shocks 2.1-2.4
/// (from Jan 2015) on the short, middle, long and full tenor sets.
std::vector<ShockSpec> scenario_catalog();

/// Maturity buckets in months: short (0, 60], middle (60, 120], long (120, 360].
inline constexpr std::array<const char*, 3> kBucketNames{"short", "middle", "long"};
inline constexpr std::array<double, 4> kBucketEdges{0.0, 60.0, 120.0, 360.0};

/// 3 x N averaging matrix mapping a curve to its bucket means.
Eigen::MatrixXd bucket_weights(const std::vector<double>& tenors);

/// Per date and bucket: mean difference (shocked - baseline) in percentage
/// points with simulated band bounds.
struct BucketDiff {
  std::vector<MonthStamp> dates;
  Eigen::MatrixXd mean;  // T x 3
  Eigen::MatrixXd lo;    // T x 3
  Eigen::MatrixXd hi;    // T x 3
};

struct PipelineOptions {
  Eigen::Index Q = 3;
  CovKind kind = CovKind::Band;
  double lambda = kDefaultLambda;
  FitOptions fit;
  GammaGrid gamma_grid;
  /// Skip the grid search and use this width.
  std::optional<double> gamma;
};

/// Reference panel -> gamma search -> kPCA -> DNS-FR fit of the response -> fitted yields.
struct PipelineResult {
  KernelConfig kernel;
  KpcaModel kpca;
  FactorPanel factors;
  FitResult fit;
  Eigen::MatrixXd fitted;  // T x N, filtered states
};

PipelineResult run_pipeline(const YieldPanel& reference, const YieldPanel& response, const PipelineOptions& options);

struct ScenarioOptions {
  PipelineOptions pipeline;
  /// Re-estimate the response model on the shocked reference; when false the
  /// baseline parameters are kept and only the filter is rerun.
  bool refit = true;
  int band_samples = 1000;
  double level = 0.95;
  std::uint64_t master_seed = 0;
};

struct ScenarioResult {
  ShockSpec spec;
  double baseline_gamma = 0.0;
  double shocked_gamma = 0.0;
  std::uint64_t seed = 0;
  BucketDiff diff;
};

/// Runs the baseline and shocked pipelines and reports bucketed differences of
/// in-sample fitted yields. A precomputed `baseline` must come from the same
/// panels and options.
ScenarioResult run_scenario(const ShockSpec& spec, const YieldPanel& reference, const YieldPanel& response,
                            const ScenarioOptions& options, const PipelineResult* baseline = nullptr);

struct Band {
  Eigen::MatrixXd lo;  // T x 3
  Eigen::MatrixXd hi;  // T x 3
};

/// Monte Carlo band of bucket-mean differences: for every t, n paired draws of
/// the states from N(a_t, P_t) under each fit mapped to yields.
Band confidence_band(const FitResult& fit_a, const FitResult& fit_b, const FactorPanel* factors_a,
                     const FactorPanel* factors_b, const NsLoadingMatrix& loadings, int n, double level,
                     std::uint64_t seed);

/// Long format: date, bucket, mean_diff, lo, hi.
void write_bucket_csv(const BucketDiff& diff, const std::filesystem::path& path);

}  // namespace dnsfr
