#include "dnsfr/stress.hpp"

#include <fstream>
#include <stdexcept>

#include "dnsfr/stats.hpp"

namespace dnsfr {
namespace {

const std::vector<double> kShortTenors{1, 3, 6, 9, 12, 24, 36, 60};
const std::vector<double> kMiddleTenors{84, 120};
const std::vector<double> kLongTenors{240, 360};

void check_fit_factors(const FitResult& fit, const FactorPanel* factors) {
  const Eigen::Index Q = fit.params.gamma.cols();
  if (Q > 0 && (factors == nullptr || factors->values.cols() != Q ||
                factors->values.rows() != static_cast<Eigen::Index>(fit.filter.periods()))) {
    throw std::invalid_argument("confidence_band: factor panel must be T x Q");
  }
}

}  // namespace

void ShockSpec::validate() const {
  if (tenors.empty()) throw std::invalid_argument("ShockSpec " + id + ": empty tenor set");
  if (!(multiplier > 0.0)) throw std::invalid_argument("ShockSpec " + id + ": multiplier must be positive");
  if (end && *end < start) throw std::invalid_argument("ShockSpec " + id + ": end precedes start");
}

YieldPanel apply_shock(const YieldPanel& panel, const ShockSpec& spec) {
  spec.validate();
  std::vector<Eigen::Index> cols;
  for (double tenor : spec.tenors) {
    const auto idx = panel.grid.index_of(tenor);
    if (!idx) throw std::invalid_argument("apply_shock: tenor " + format_double(tenor) + " is not on the grid");
    cols.push_back(static_cast<Eigen::Index>(*idx));
  }
  YieldPanel out = panel;
  for (std::size_t t = 0; t < panel.dates.size(); ++t) {
    const MonthStamp d = panel.dates[t];
    if (d < spec.start || (spec.end && *spec.end < d)) continue;
    for (Eigen::Index c : cols) out.values(static_cast<Eigen::Index>(t), c) *= spec.multiplier;
  }
  return out;
}

std::vector<ShockSpec> scenario_catalog() {
  const MonthStamp start{2015, 1};
  const MonthStamp end{2015, 12};
  const std::vector<double> all = MaturityGrid::canonical().tenors();
  const std::array<std::pair<const char*, const std::vector<double>*>, 4> sets{{
      {"short-end maturities double", &kShortTenors},
      {"middle maturities double", &kMiddleTenors},
      {"long-end maturities double", &kLongTenors},
      {"entire yield curve doubles", &all},
  }};
  std::vector<ShockSpec> out;
  for (int scenario = 1; scenario <= 2; ++scenario) {
    for (int k = 0; k < 4; ++k) {
      ShockSpec s;
      s.id = std::to_string(scenario) + "." + std::to_string(k + 1);
      s.description = std::string(scenario == 1 ? "temporary: " : "permanent: ") + sets[k].first;
      s.start = start;
      if (scenario == 1) s.end = end;
      s.tenors = *sets[k].second;
      s.multiplier = 2.0;
      out.push_back(std::move(s));
    }
  }
  return out;
}

Eigen::MatrixXd bucket_weights(const std::vector<double>& tenors) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(tenors.size()));
  for (int b = 0; b < 3; ++b) {
    int count = 0;
    for (std::size_t i = 0; i < tenors.size(); ++i) {
      if (tenors[i] > kBucketEdges[b] && tenors[i] <= kBucketEdges[b + 1]) {
        W(b, static_cast<Eigen::Index>(i)) = 1.0;
        ++count;
      }
    }
    if (count == 0) throw std::invalid_argument(std::string("bucket_weights: no tenor in bucket ") + kBucketNames[b]);
    W.row(b) /= count;
  }
  return W;
}

PipelineResult run_pipeline(const YieldPanel& reference, const YieldPanel& response, const PipelineOptions& options) {
  if (reference.dates != response.dates) throw DataError("run_pipeline: panels must share dates");
  PipelineResult out;
  out.kernel = options.gamma ? KernelConfig{*options.gamma}
                             : grid_search_gamma(reference, options.Q, options.gamma_grid);
  out.kpca = fit_kpca(reference, out.kernel, options.Q);
  out.factors = extract_factors(out.kpca, reference);
  out.fit = fit_mle(response, &out.factors, options.kind, options.Q, options.lambda, options.fit);
  out.fitted = fitted_yields(out.fit, &out.factors, loading_matrix(response.grid, options.lambda));
  return out;
}

ScenarioResult run_scenario(const ShockSpec& spec, const YieldPanel& reference, const YieldPanel& response,
                            const ScenarioOptions& options, const PipelineResult* baseline) {
  const PipelineResult own_baseline = baseline ? PipelineResult{} : run_pipeline(reference, response, options.pipeline);
  const PipelineResult& base = baseline ? *baseline : own_baseline;

  const YieldPanel shocked = apply_shock(reference, spec);
  PipelineResult stressed;
  if (options.refit) {
    stressed = run_pipeline(shocked, response, options.pipeline);
  } else {
    const PipelineOptions& po = options.pipeline;
    stressed.kernel = po.gamma ? KernelConfig{*po.gamma} : grid_search_gamma(shocked, po.Q, po.gamma_grid);
    stressed.kpca = fit_kpca(shocked, stressed.kernel, po.Q);
    stressed.factors = extract_factors(stressed.kpca, shocked);
    const NsLoadingMatrix loadings = loading_matrix(response.grid, po.lambda);
    stressed.fit = base.fit;
    stressed.fit.filter = run_filter(deflate(response, &stressed.factors, base.fit.params, loadings),
                                     base.fit.params, loadings.matrix, stationary_init(base.fit.params));
    stressed.fit.loglik = stressed.fit.filter.loglik;
    stressed.fitted = fitted_yields(stressed.fit, &stressed.factors, loadings);
  }

  ScenarioResult out;
  out.spec = spec;
  out.baseline_gamma = base.kernel.gamma;
  out.shocked_gamma = stressed.kernel.gamma;
  out.seed = derive_seed(options.master_seed, fnv1a(spec.id));

  const Eigen::MatrixXd W = bucket_weights(response.grid.tenors());
  out.diff.dates = response.dates;
  out.diff.mean = (stressed.fitted - base.fitted) * W.transpose();
  const Band band = confidence_band(base.fit, stressed.fit, &base.factors, &stressed.factors,
                                    loading_matrix(response.grid, options.pipeline.lambda), options.band_samples,
                                    options.level, out.seed);
  out.diff.lo = band.lo;
  out.diff.hi = band.hi;
  return out;
}

Band confidence_band(const FitResult& fit_a, const FitResult& fit_b, const FactorPanel* factors_a,
                     const FactorPanel* factors_b, const NsLoadingMatrix& loadings, int n, double level,
                     std::uint64_t seed) {
  if (n < 100) throw std::invalid_argument("confidence_band: need at least 100 samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence_band: level must lie in (0, 1)");
  const std::size_t T = fit_a.filter.periods();
  if (fit_b.filter.periods() != T) throw std::invalid_argument("confidence_band: fits cover different periods");
  check_fit_factors(fit_a, factors_a);
  check_fit_factors(fit_b, factors_b);

  const Eigen::MatrixXd W = bucket_weights(loadings.grid.tenors());
  // Bucket means are linear in the state, so only the 3 x 3 maps are needed.
  const Eigen::Matrix3d C = W * loadings.matrix;
  auto offset = [&](const FitResult& fit, const FactorPanel* factors, std::size_t t) {
    Eigen::VectorXd curve = loadings.matrix * fit.params.mu();
    if (fit.params.gamma.cols() > 0) {
      curve += fit.params.gamma * factors->values.row(static_cast<Eigen::Index>(t)).transpose();
    }
    return Eigen::Vector3d(W * curve);
  };

  const double tail = 0.5 * (1.0 - level);
  Band band;
  band.lo.resize(static_cast<Eigen::Index>(T), 3);
  band.hi.resize(static_cast<Eigen::Index>(T), 3);
  Rng rng(seed);
  std::array<std::vector<double>, 3> diffs;
  for (auto& d : diffs) d.resize(static_cast<std::size_t>(n));
  for (std::size_t t = 0; t < T; ++t) {
    const GaussianSampler sa(fit_a.filter.a_filt[t], fit_a.filter.P_filt[t]);
    const GaussianSampler sb(fit_b.filter.a_filt[t], fit_b.filter.P_filt[t]);
    const Eigen::Vector3d off = offset(fit_b, factors_b, t) - offset(fit_a, factors_a, t);
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd xa = sa.draw(rng);
      const Eigen::VectorXd xb = sb.draw(rng);
      const Eigen::Vector3d d = C * (xb - xa) + off;
      for (int b = 0; b < 3; ++b) diffs[b][static_cast<std::size_t>(j)] = d(b);
    }
    for (int b = 0; b < 3; ++b) {
      band.lo(static_cast<Eigen::Index>(t), b) = percentile(diffs[b], tail);
      band.hi(static_cast<Eigen::Index>(t), b) = percentile(diffs[b], 1.0 - tail);
    }
  }
  return band;
}

void write_bucket_csv(const BucketDiff& diff, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date,bucket,mean_diff,lo,hi\n";
  for (std::size_t t = 0; t < diff.dates.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    for (int b = 0; b < 3; ++b) {
      out << diff.dates[t].to_string() << ',' << kBucketNames[b] << ',' << format_double(diff.mean(r, b)) << ','
          << format_double(diff.lo(r, b)) << ',' << format_double(diff.hi(r, b)) << '\n';
    }
  }
}

}  // namespace dnsfr
