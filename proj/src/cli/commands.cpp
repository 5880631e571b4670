#include "dnsfr/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dnsfr/estimation.hpp"
#include "dnsfr/forecasting.hpp"
#include "dnsfr/kpca.hpp"
#include "dnsfr/market_data.hpp"
#include "dnsfr/portfolio.hpp"
#include "dnsfr/serialization.hpp"
#include "dnsfr/stats.hpp"
#include "dnsfr/stress.hpp"

namespace fs = std::filesystem;

namespace dnsfr {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CollisionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::string out = "out";
  std::string reference;
  std::string response;
  std::string model = "dnsfr";
  int cov = 2;
  int q = 3;
  double lambda = kDefaultLambda;
  double gamma = 0.0;  // 0 = grid search
  double gamma_min = 0.001;
  double gamma_max = 1.0;
  double gamma_step = 0.001;
  int horizon = 12;
  std::optional<std::uint64_t> seed;
  int starts = 5;
  int max_evals = 50000;
  double tolerance = 1e-8;
  std::string states = "filtered";
  std::string cases;
  bool frozen = false;
  int band_samples = 1000;
  std::string market;
  int bond_tenor = 12;
  int paths = 1000;
  double wealth = 12'000'000.0;
  double spend = 1'000'000.0;
  int investments = 13;
  double face_gbp = 100.0;
  int window = 60;
  bool overwrite = false;

  [[nodiscard]] CovKind kind() const { return static_cast<CovKind>(cov); }
  [[nodiscard]] GammaGrid gamma_grid() const { return {gamma_min, gamma_max, gamma_step}; }
  [[nodiscard]] std::optional<double> fixed_gamma() const {
    return gamma > 0.0 ? std::optional<double>(gamma) : std::nullopt;
  }

  void validate() const {
    if (cov < 1 || cov > 3) throw UsageError("--cov must be 1, 2 or 3");
    if (q < 0) throw UsageError("--q must be >= 0");
    if (!(lambda > 0.0)) throw UsageError("--lambda must be positive");
    if (horizon < 1) throw UsageError("--horizon must be >= 1");
    if (model != "dns" && model != "dnsfr") throw UsageError("--model must be dns or dnsfr");
    if (model == "dnsfr" && q < 1) throw UsageError("--model dnsfr needs --q >= 1");
    if (states != "filtered" && states != "predicted") throw UsageError("--states must be filtered or predicted");
    if (starts < 1 || max_evals < 1) throw UsageError("--starts and --max-evals must be positive");
    if (gamma < 0.0) throw UsageError("--gamma must be positive (0 selects the grid search)");
    if (gamma_grid().points().empty()) throw UsageError("empty gamma grid");
  }

  /// Flat key=value text, replayable through --config.
  [[nodiscard]] std::string to_cfg() const {
    std::ostringstream os;
    os << "out=" << out << '\n'
       << "reference=" << reference << '\n'
       << "response=" << response << '\n'
       << "model=" << model << '\n'
       << "cov=" << cov << '\n'
       << "q=" << q << '\n'
       << "lambda=" << format_double(lambda) << '\n'
       << "gamma=" << format_double(gamma) << '\n'
       << "gamma-min=" << format_double(gamma_min) << '\n'
       << "gamma-max=" << format_double(gamma_max) << '\n'
       << "gamma-step=" << format_double(gamma_step) << '\n'
       << "horizon=" << horizon << '\n'
       << "seed=" << seed.value_or(0) << '\n'
       << "starts=" << starts << '\n'
       << "max-evals=" << max_evals << '\n'
       << "tolerance=" << format_double(tolerance) << '\n'
       << "states=" << states << '\n'
       << "cases=" << cases << '\n'
       << "frozen=" << (frozen ? "true" : "false") << '\n'
       << "band-samples=" << band_samples << '\n'
       << "market=" << market << '\n'
       << "bond-tenor=" << bond_tenor << '\n'
       << "paths=" << paths << '\n'
       << "wealth=" << format_double(wealth) << '\n'
       << "spend=" << format_double(spend) << '\n'
       << "investments=" << investments << '\n'
       << "face-gbp=" << format_double(face_gbp) << '\n'
       << "window=" << window << '\n';
    return os.str();
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Output files of one command, relative to the output directory. Existing
/// files are only replaced with --overwrite.
class Outputs {
 public:
  Outputs(fs::path root, bool overwrite) : root_(std::move(root)), overwrite_(overwrite) {}

  [[nodiscard]] const fs::path& root() const { return root_; }

  void check(const std::vector<std::string>& rels) const {
    for (const auto& rel : rels) {
      if (!overwrite_ && fs::exists(root_ / rel)) {
        throw CollisionError("refusing to overwrite " + (root_ / rel).string() + " (pass --overwrite)");
      }
    }
  }

  fs::path claim(const std::string& rel) {
    check({rel});
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    written_.push_back(rel);
    return p;
  }

  /// Records an existing artifact that this command reused instead of rewriting.
  void reuse(const std::string& rel) { written_.push_back(rel); }

  /// Artifacts produced or reused, in order of use.
  [[nodiscard]] const std::vector<std::string>& artifacts() const { return written_; }

 private:
  fs::path root_;
  bool overwrite_;
  std::vector<std::string> written_;
};

struct Context {
  RunConfig cfg;
  Outputs outputs;
  std::uint64_t seed = 0;
};

FitOptions fit_options(const Context& ctx) {
  FitOptions o;
  o.starts = ctx.cfg.starts;
  o.max_evaluations = ctx.cfg.max_evals;
  o.tolerance = ctx.cfg.tolerance;
  o.seed = ctx.seed;
  return o;
}

// ---------------------------------------------------------------------------
// Prepared panels and cached fits

struct Panels {
  YieldPanel reference;
  YieldPanel response;
  std::string reference_hash;
  std::string response_hash;
};

Panels load_prepared(const Context& ctx) {
  const fs::path ref = ctx.outputs.root() / "panels" / "reference.csv";
  const fs::path resp = ctx.outputs.root() / "panels" / "response.csv";
  if (!fs::exists(ref) || !fs::exists(resp)) {
    throw DataError("prepared panels not found under " + (ctx.outputs.root() / "panels").string() +
                    " (run `dnsfr prepare` first)");
  }
  const MaturityGrid grid = MaturityGrid::canonical();
  Panels p{load_yield_csv(ref, grid), load_yield_csv(resp, grid), hex(fnv1a(read_file(ref))),
           hex(fnv1a(read_file(resp)))};
  if (p.reference.dates != p.response.dates) throw DataError("prepared panels cover different dates");
  if (!p.reference.complete() || !p.response.complete()) throw DataError("prepared panels have missing cells");
  return p;
}

Json fit_settings(const Context& ctx, const std::string& panel_hash, bool with_factors) {
  Json s;
  s["panel"] = panel_hash;
  s["cov"] = ctx.cfg.cov;
  s["lambda"] = ctx.cfg.lambda;
  s["starts"] = ctx.cfg.starts;
  s["max_evals"] = ctx.cfg.max_evals;
  s["tolerance"] = ctx.cfg.tolerance;
  s["seed"] = ctx.seed;
  if (with_factors) {
    s["q"] = ctx.cfg.q;
    s["gamma"] = ctx.cfg.gamma;
    s["gamma_grid"] = {ctx.cfg.gamma_min, ctx.cfg.gamma_max, ctx.cfg.gamma_step};
  }
  return s;
}

/// Rebuilds a FitResult from stored parameters by rerunning the filter.
FitResult refilter(const YieldPanel& panel, const FactorPanel* factors, const Json& stored) {
  FitResult fit;
  fit.params = params_from_json(stored.at("params"));
  const NsLoadingMatrix loadings = loading_matrix(panel.grid, fit.params.lambda);
  fit.filter = run_filter(deflate(panel, factors, fit.params, loadings), fit.params, loadings.matrix,
                          stationary_init(fit.params));
  fit.loglik = fit.filter.loglik;
  fit.converged = stored.at("converged").get<bool>();
  fit.iterations = stored.at("iterations").get<int>();
  fit.evaluations = stored.at("evaluations").get<int>();
  fit.start_logliks = stored.at("start_logliks").get<std::vector<double>>();
  return fit;
}

std::optional<Json> cached(Context& ctx, const std::string& rel, const Json& settings) {
  const fs::path p = ctx.outputs.root() / rel;
  if (!fs::exists(p)) return std::nullopt;
  Json j = read_json(p);
  if (!j.contains("settings") || j["settings"] != settings) return std::nullopt;
  ctx.outputs.reuse(rel);
  return j;
}

void store_fit(Context& ctx, const std::string& rel, const FitResult& fit, const Json& settings) {
  Json j;
  j["settings"] = settings;
  j["fit"] = to_json(fit);
  write_json(j, ctx.outputs.claim(rel));
}

/// Plain DNS fit of `panel`, reused from `rel` when the settings match.
FitResult obtain_dns(Context& ctx, const YieldPanel& panel, const std::string& hash, const std::string& rel) {
  const Json settings = fit_settings(ctx, hash, false);
  if (auto j = cached(ctx, rel, settings)) return refilter(panel, nullptr, j->at("fit"));
  const FitResult fit = fit_mle(panel, nullptr, ctx.cfg.kind(), 0, ctx.cfg.lambda, fit_options(ctx));
  store_fit(ctx, rel, fit, settings);
  return fit;
}

PipelineOptions pipeline_options(const Context& ctx, const FitResult& response_dns, Eigen::Index tenors) {
  PipelineOptions po;
  po.Q = ctx.cfg.q;
  po.kind = ctx.cfg.kind();
  po.lambda = ctx.cfg.lambda;
  po.fit = fit_options(ctx);
  // The DNS optimum is the first start, so DNS-FR never fits worse than DNS.
  po.fit.init = with_zero_regression(response_dns.params, tenors, ctx.cfg.q);
  po.gamma_grid = ctx.cfg.gamma_grid();
  po.gamma = ctx.cfg.fixed_gamma();
  return po;
}

struct ModelSet {
  Panels panels;
  FitResult dns;
  std::optional<FitResult> reference_dns;
  std::optional<PipelineResult> dnsfr;
  std::optional<GammaSearchResult> gamma_search;
};

/// Response DNS fit, and for DNS-FR also the reference DNS fit, kPCA and the
/// DNS-FR fit. Cached artifacts under fits/ are reused when their settings match.
ModelSet obtain_models(Context& ctx, bool want_dnsfr) {
  ModelSet m{load_prepared(ctx), {}, {}, {}, {}};
  const YieldPanel& ref = m.panels.reference;
  const YieldPanel& resp = m.panels.response;
  m.dns = obtain_dns(ctx, resp, m.panels.response_hash, "fits/dns.json");
  if (!want_dnsfr) return m;
  m.reference_dns = obtain_dns(ctx, ref, m.panels.reference_hash, "fits/reference_dns.json");

  PipelineOptions po = pipeline_options(ctx, m.dns, resp.tenor_count());
  Json settings = fit_settings(ctx, m.panels.response_hash + m.panels.reference_hash, true);
  if (auto j = cached(ctx, "fits/dnsfr.json", settings)) {
    PipelineResult p;
    p.kernel = KernelConfig{j->at("kpca").at("gamma").get<double>()};
    p.kpca = fit_kpca(ref, p.kernel, ctx.cfg.q);
    p.factors = extract_factors(p.kpca, ref);
    p.fit = refilter(resp, &p.factors, j->at("fit"));
    p.fitted = fitted_yields(p.fit, &p.factors, loading_matrix(resp.grid, ctx.cfg.lambda));
    m.dnsfr = std::move(p);
    return m;
  }
  if (!po.gamma) {
    m.gamma_search = grid_search_gamma_detailed(ref, ctx.cfg.q, po.gamma_grid);
    po.gamma = m.gamma_search->best.gamma;
  }
  m.dnsfr = run_pipeline(ref, resp, po);
  Json j;
  j["settings"] = settings;
  j["kpca"] = to_json(m.dnsfr->kpca);
  j["fit"] = to_json(m.dnsfr->fit);
  write_json(j, ctx.outputs.claim("fits/dnsfr.json"));
  if (m.gamma_search) {
    std::ofstream os(ctx.outputs.claim("fits/gamma_search.csv"));
    os << "gamma,preimage_error\n";
    for (std::size_t g = 0; g < m.gamma_search->gammas.size(); ++g) {
      os << format_double(m.gamma_search->gammas[g]) << ',' << format_double(m.gamma_search->errors[g]) << '\n';
    }
  }
  return m;
}

void write_matrix_panel(const std::vector<MonthStamp>& dates, const Eigen::MatrixXd& values, const MaturityGrid& grid,
                        const fs::path& path) {
  write_yield_csv(make_panel(dates, values, grid), path);
}

std::vector<MonthStamp> forecast_dates(const YieldPanel& panel, int h) {
  return month_range(panel.dates.back().plus_months(1), h);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_prepare(Context& ctx) {
  if (ctx.cfg.reference.empty() || ctx.cfg.response.empty()) {
    throw UsageError("prepare needs --reference and --response raw CSV paths");
  }
  const MaturityGrid grid = MaturityGrid::canonical();
  ctx.outputs.check({"panels/reference.csv", "panels/response.csv", "panels/quality.csv"});

  struct Prepared {
    std::string name;
    YieldPanel raw;
    YieldPanel canonical;
  };
  std::vector<Prepared> sets;
  for (const auto& [name, path] : {std::pair{std::string("reference"), ctx.cfg.reference},
                                   std::pair{std::string("response"), ctx.cfg.response}}) {
    YieldPanel raw = load_yield_csv(path);
    YieldPanel filled = interpolate_missing(raw);
    sets.push_back({name, raw, match_maturities(filled, grid, ctx.cfg.lambda)});
  }

  // Common date range.
  MonthStamp first = std::max(sets[0].canonical.dates.front(), sets[1].canonical.dates.front());
  MonthStamp last = std::min(sets[0].canonical.dates.back(), sets[1].canonical.dates.back());
  if (last < first) throw DataError("reference and response panels share no dates");
  for (auto& s : sets) {
    const Eigen::Index offset = first.ordinal() - s.canonical.dates.front().ordinal();
    s.canonical = s.canonical.slice(offset, last.ordinal() - first.ordinal() + 1);
  }

  write_yield_csv(sets[0].canonical, ctx.outputs.claim("panels/reference.csv"));
  write_yield_csv(sets[1].canonical, ctx.outputs.claim("panels/response.csv"));
  std::ofstream q(ctx.outputs.claim("panels/quality.csv"));
  q << "panel,tenor,missing,synthesized\n";
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto src = s.raw.grid.index_of(grid[i]);
      const long missing =
          src ? static_cast<long>((!s.raw.mask.col(static_cast<Eigen::Index>(*src))).count()) : s.raw.periods();
      q << s.name << ',' << format_double(grid[i]) << ',' << missing << ',' << (src ? "false" : "true") << '\n';
    }
  }
}

void cmd_fit(Context& ctx) {
  const bool fr = ctx.cfg.model == "dnsfr";
  const std::string model = ctx.cfg.model;
  ctx.outputs.check({"fits/" + model + "_rmse.csv", "fits/" + model + "_fitted.csv"});
  ModelSet m = obtain_models(ctx, fr);
  const YieldPanel& resp = m.panels.response;
  const NsLoadingMatrix loadings = loading_matrix(resp.grid, ctx.cfg.lambda);
  const StateChoice states = ctx.cfg.states == "predicted" ? StateChoice::Predicted : StateChoice::Filtered;

  const Eigen::MatrixXd fitted = fr ? fitted_yields(m.dnsfr->fit, &m.dnsfr->factors, loadings, states)
                                    : fitted_yields(m.dns, nullptr, loadings, states);
  write_rmse_csv(rmse_table(resp, fitted), ctx.outputs.claim("fits/" + model + "_rmse.csv"));
  write_matrix_panel(resp.dates, fitted, resp.grid, ctx.outputs.claim("fits/" + model + "_fitted.csv"));
  if (fr) {
    const Eigen::MatrixXd curves = reconstruct_functional_coefficients(m.dnsfr->fit.params.gamma, m.dnsfr->kpca);
    std::ofstream os(ctx.outputs.claim("fits/functional_coefficients.csv"));
    os << "tenor";
    for (double t : resp.grid.tenors()) os << ',' << format_double(t);
    os << '\n';
    for (Eigen::Index i = 0; i < curves.rows(); ++i) {
      os << format_double(resp.grid[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < curves.cols(); ++j) os << ',' << format_double(curves(i, j));
      os << '\n';
    }
  }
}

ForecastResult make_forecast(const ModelSet& m, const Context& ctx) {
  const NsLoadingMatrix loadings = loading_matrix(m.panels.response.grid, ctx.cfg.lambda);
  if (ctx.cfg.model == "dns") return forecast_dns(m.dns, loadings, ctx.cfg.horizon);
  return forecast_dnsfr(m.dnsfr->fit, *m.reference_dns, m.dnsfr->kpca, m.panels.reference, loadings,
                        ctx.cfg.horizon);
}

void cmd_forecast(Context& ctx) {
  const std::string model = ctx.cfg.model;
  ctx.outputs.check({"forecasts/" + model + "_forecast.csv", "forecasts/" + model + "_forecast_cov.json"});
  const ModelSet m = obtain_models(ctx, model == "dnsfr");
  const ForecastResult f = make_forecast(m, ctx);
  const auto dates = forecast_dates(m.panels.response, ctx.cfg.horizon);
  write_forecast_csv(f, dates, m.panels.response.grid.tenors(), ctx.outputs.claim("forecasts/" + model + "_forecast.csv"));
  write_json(forecast_covariance_json(f, dates), ctx.outputs.claim("forecasts/" + model + "_forecast_cov.json"));
}

std::vector<ShockSpec> selected_cases(const std::string& list) {
  const std::vector<ShockSpec> catalog = scenario_catalog();
  if (list.empty() || list == "all") return catalog;
  std::vector<ShockSpec> out;
  std::stringstream ss(list);
  std::string id;
  std::set<std::string> seen;
  while (std::getline(ss, id, ',')) {
    if (id.empty() || !seen.insert(id).second) continue;
    bool found = false;
    for (const auto& s : catalog) {
      if (s.id == id) {
        out.push_back(s);
        found = true;
      }
    }
    if (!found) throw UsageError("unknown stress case '" + id + "'");
  }
  return out;
}

Json spec_json(const ShockSpec& s) {
  Json j;
  j["id"] = s.id;
  j["description"] = s.description;
  j["start"] = s.start.to_string();
  j["end"] = s.end ? Json(s.end->to_string()) : Json(nullptr);
  j["tenors"] = s.tenors;
  j["multiplier"] = s.multiplier;
  return j;
}

void cmd_stress(Context& ctx) {
  if (ctx.cfg.q < 1) throw UsageError("stress needs --q >= 1");
  const std::vector<ShockSpec> cases = selected_cases(ctx.cfg.cases);
  std::vector<std::string> planned{"stress/summary.json"};
  for (const auto& s : cases) planned.push_back("stress/case_" + s.id + ".csv");
  ctx.outputs.check(planned);

  const ModelSet m = obtain_models(ctx, true);
  ScenarioOptions so;
  so.pipeline = pipeline_options(ctx, m.dns, m.panels.response.tenor_count());
  so.refit = !ctx.cfg.frozen;
  so.band_samples = ctx.cfg.band_samples;
  so.master_seed = ctx.seed;

  Json summary;
  summary["refit"] = so.refit;
  summary["band_samples"] = so.band_samples;
  summary["baseline_gamma"] = m.dnsfr->kernel.gamma;
  Json rows = Json::array();
  for (const auto& spec : cases) {
    const ScenarioResult r = run_scenario(spec, m.panels.reference, m.panels.response, so, &*m.dnsfr);
    write_bucket_csv(r.diff, ctx.outputs.claim("stress/case_" + spec.id + ".csv"));
    Json row;
    row["spec"] = spec_json(spec);
    row["shocked_gamma"] = r.shocked_gamma;
    row["seed"] = r.seed;
    rows.push_back(std::move(row));
  }
  summary["cases"] = std::move(rows);
  write_json(summary, ctx.outputs.claim("stress/summary.json"));
}

void write_inventory(const std::vector<Holding>& inventory, const fs::path& path) {
  std::ofstream os(path);
  os << "purchase_month,count,remaining\n";
  for (const Holding& h : inventory) {
    os << h.purchase_month << ',' << format_double(h.count) << ',' << h.remaining << '\n';
  }
}

void cmd_ladder(Context& ctx) {
  if (ctx.cfg.market.empty()) throw UsageError("ladder needs --market");
  LadderConfig lc;
  lc.initial_wealth = ctx.cfg.wealth;
  lc.monthly_spend = ctx.cfg.spend;
  lc.investments = ctx.cfg.investments;
  lc.bond_tenor = ctx.cfg.bond_tenor;
  lc.face_value_gbp = ctx.cfg.face_gbp;
  lc.validate();
  const std::string stem = "ladder/" + ctx.cfg.model + "_T" + std::to_string(ctx.cfg.bond_tenor);
  const std::vector<ShockSpec> cases = ctx.cfg.cases.empty() ? std::vector<ShockSpec>{} : selected_cases(ctx.cfg.cases);
  std::vector<std::string> planned{stem + ".csv", stem + "_inventory.csv"};
  for (const auto& s : cases) planned.push_back(stem + "_case_" + s.id + ".csv");
  ctx.outputs.check(planned);

  const MarketSeries market = load_market_csv(ctx.cfg.market);
  if (ctx.cfg.horizon < lc.investments - 1) throw UsageError("--horizon must cover investments - 1 months");

  const ModelSet m = obtain_models(ctx, ctx.cfg.model == "dnsfr");
  const YieldPanel& resp = m.panels.response;
  if (market.dates.empty() || market.dates.front() != resp.dates.back()) {
    throw DataError("market series must start at the last in-sample month " + resp.dates.back().to_string());
  }
  const Eigen::VectorXd known = resp.values.row(resp.periods() - 1).transpose();
  const ForecastResult f = make_forecast(m, ctx);
  const LadderPath path = simulate_ladder(lc, market, known, f, resp.grid.tenors(), ctx.cfg.paths, ctx.seed);
  write_ladder_csv(path, ctx.outputs.claim(stem + ".csv"));
  write_inventory(path.inventory, ctx.outputs.claim(stem + "_inventory.csv"));

  if (cases.empty()) return;
  if (ctx.cfg.model != "dnsfr") throw UsageError("stressed ladders need --model dnsfr");
  const PipelineOptions po = pipeline_options(ctx, m.dns, resp.tenor_count());
  const NsLoadingMatrix loadings = loading_matrix(resp.grid, ctx.cfg.lambda);
  for (const auto& spec : cases) {
    const YieldPanel shocked = apply_shock(m.panels.reference, spec);
    const PipelineResult b = run_pipeline(shocked, resp, po);
    const FitResult ref_fit = fit_mle(shocked, nullptr, ctx.cfg.kind(), 0, ctx.cfg.lambda, fit_options(ctx));
    const ForecastResult fs_ = forecast_dnsfr(b.fit, ref_fit, b.kpca, shocked, loadings, ctx.cfg.horizon);
    const LadderPath sp = simulate_ladder(lc, market, known, fs_, resp.grid.tenors(), ctx.cfg.paths, ctx.seed);
    write_ladder_csv(sp, ctx.outputs.claim(stem + "_case_" + spec.id + ".csv"));
  }
}

void cmd_window(Context& ctx) {
  if (ctx.cfg.q < 1) throw UsageError("window needs --q >= 1");
  ctx.outputs.check({"forecasts/moving_window.csv"});
  const Panels p = load_prepared(ctx);
  WindowConfig wc;
  wc.window = ctx.cfg.window;
  wc.horizon = ctx.cfg.horizon;
  wc.kind = ctx.cfg.kind();
  wc.Q = ctx.cfg.q;
  wc.lambda = ctx.cfg.lambda;
  wc.fit = fit_options(ctx);
  wc.gamma = ctx.cfg.fixed_gamma();
  wc.gamma_grid = ctx.cfg.gamma_grid();
  write_window_csv(moving_window(p.response, p.reference, wc), ctx.outputs.claim("forecasts/moving_window.csv"));
}

void write_manifest(Context& ctx) {
  RunConfig replay = ctx.cfg;
  replay.seed = ctx.seed;
  const std::string cfg_text = replay.to_cfg();
  const bool per_model = ctx.cfg.command == "fit" || ctx.cfg.command == "forecast" || ctx.cfg.command == "ladder";
  const std::string stem = "manifests/" + ctx.cfg.command + (per_model ? "_" + ctx.cfg.model : std::string());
  const std::string rel_cfg = stem + ".cfg";
  const std::string rel_json = stem + ".json";
  ctx.outputs.check({rel_cfg, rel_json});

  Json files = Json::array();
  for (const auto& rel : ctx.outputs.artifacts()) {
    Json f;
    f["path"] = rel;
    f["fnv1a"] = hex(fnv1a(read_file(ctx.outputs.root() / rel)));
    files.push_back(std::move(f));
  }
  Json j;
  j["command"] = ctx.cfg.command;
  j["version"] = kVersion;
  j["seed"] = ctx.seed;
  j["seed_generated"] = !ctx.cfg.seed.has_value();
  j["config_hash"] = hex(fnv1a(cfg_text));
  j["config_file"] = rel_cfg;
  j["artifacts"] = std::move(files);
  {
    std::ofstream os(ctx.outputs.claim(rel_cfg));
    os << cfg_text;
  }
  write_json(j, ctx.outputs.claim(rel_json));
}

void print_error(const std::string& type, const std::string& message, const std::string& command, int code) {
  Json j;
  j["error"] = {{"type", type}, {"message", message}, {"command", command}, {"exit_code", code}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int run_cli(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Dynamic Nelson-Siegel yield models with functional regression"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "Flat key=value file; explicit flags take precedence");
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  app.add_option("--reference", cfg.reference, "Raw reference-economy CSV (prepare)");
  app.add_option("--response", cfg.response, "Raw response-economy CSV (prepare)");
  app.add_option("--model", cfg.model, "dns or dnsfr")->capture_default_str();
  app.add_option("--cov", cfg.cov, "Measurement covariance structure 1, 2 or 3")->capture_default_str();
  app.add_option("--q", cfg.q, "Number of kPCA factors")->capture_default_str();
  app.add_option("--lambda", cfg.lambda, "Nelson-Siegel decay per month")->capture_default_str();
  app.add_option("--gamma", cfg.gamma, "Fixed RBF width (0 = grid search)")->capture_default_str();
  app.add_option("--gamma-min", cfg.gamma_min)->capture_default_str();
  app.add_option("--gamma-max", cfg.gamma_max)->capture_default_str();
  app.add_option("--gamma-step", cfg.gamma_step)->capture_default_str();
  app.add_option("--horizon", cfg.horizon, "Forecast horizon in months")->capture_default_str();
  app.add_option("--seed", seed, "Master seed; generated and recorded when absent");
  app.add_option("--starts", cfg.starts, "Optimizer multi-starts")->capture_default_str();
  app.add_option("--max-evals", cfg.max_evals, "Likelihood evaluations per start")->capture_default_str();
  app.add_option("--tolerance", cfg.tolerance, "Simplex diameter tolerance")->capture_default_str();
  app.add_option("--states", cfg.states, "Fitted yields from filtered or predicted states")->capture_default_str();
  app.add_option("--cases", cfg.cases, "Comma-separated stress case ids (default all)");
  app.add_option("--frozen", cfg.frozen, "Keep baseline response parameters under shocks")->capture_default_str();
  app.add_option("--band-samples", cfg.band_samples, "Draws per date for stress bands")->capture_default_str();
  app.add_option("--market", cfg.market, "Market CSV (date,effr_percent,fx)");
  app.add_option("--bond-tenor", cfg.bond_tenor, "Ladder bond tenor in months")->capture_default_str();
  app.add_option("--paths", cfg.paths, "Ladder Monte Carlo paths")->capture_default_str();
  app.add_option("--wealth", cfg.wealth, "Initial wealth (USD)")->capture_default_str();
  app.add_option("--spend", cfg.spend, "Monthly purchase (USD)")->capture_default_str();
  app.add_option("--investments", cfg.investments, "Number of purchases")->capture_default_str();
  app.add_option("--face-gbp", cfg.face_gbp, "Bond face value (GBP)")->capture_default_str();
  app.add_option("--window", cfg.window, "Moving-window length in months")->capture_default_str();
  app.add_flag("--overwrite", cfg.overwrite, "Replace existing output files");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"prepare", "Grid-match and gap-fill raw panels"},
      {"fit", "Estimate DNS or DNS-FR by maximum likelihood"},
      {"forecast", "h-step forecasts"},
      {"stress", "Shock scenarios on the reference curve"},
      {"ladder", "Bond-ladder simulation with 5% VaR"},
      {"window", "Rolling-window in/out-of-sample RMSE"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what(), "", 2);
    return 2;
  }

  cfg.command = app.get_subcommands().front()->get_name();
  cfg.seed = seed;
  try {
    cfg.validate();
    std::uint64_t resolved = seed ? *seed : std::random_device{}();
    if (!seed) resolved = (resolved << 32) ^ std::random_device{}();
    Context ctx{cfg, Outputs(cfg.out, cfg.overwrite), resolved};
    if (cfg.command == "prepare") cmd_prepare(ctx);
    else if (cfg.command == "fit") cmd_fit(ctx);
    else if (cfg.command == "forecast") cmd_forecast(ctx);
    else if (cfg.command == "stress") cmd_stress(ctx);
    else if (cfg.command == "ladder") cmd_ladder(ctx);
    else if (cfg.command == "window") cmd_window(ctx);
    write_manifest(ctx);
  } catch (const UsageError& e) {
    print_error("usage", e.what(), cfg.command, 2);
    return 2;
  } catch (const CollisionError& e) {
    print_error("collision", e.what(), cfg.command, 3);
    return 3;
  } catch (const DataError& e) {
    print_error("data", e.what(), cfg.command, 1);
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what(), cfg.command, 1);
    return 1;
  }
  return 0;
}

}  // namespace dnsfr
