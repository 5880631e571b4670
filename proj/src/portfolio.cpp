#include "dnsfr/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dnsfr/stats.hpp"

namespace dnsfr {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& cell, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw DataError(context + ": cannot parse '" + cell + "'");
  }
  if (used != cell.size() || !std::isfinite(v)) throw DataError(context + ": cannot parse '" + cell + "'");
  return v;
}

}  // namespace

void LadderConfig::validate() const {
  if (!(initial_wealth > 0.0 && monthly_spend > 0.0 && face_value_gbp > 0.0)) {
    throw std::invalid_argument("LadderConfig: amounts must be positive");
  }
  if (investments < 1) throw std::invalid_argument("LadderConfig: need at least one investment");
  if (bond_tenor < 1) throw std::invalid_argument("LadderConfig: bond tenor must be at least one month");
}

MarketSeries load_market_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  MarketSeries m;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    std::stringstream ss(line);
    std::string date, effr, fx;
    if (!std::getline(ss, date, ',') || !std::getline(ss, effr, ',') || !std::getline(ss, fx)) {
      throw DataError(ctx + ": expected date,effr_percent,fx");
    }
    m.dates.push_back(MonthStamp::parse(trim(date)));
    effr = trim(effr);
    if (effr.empty() || effr == "-") {
      if (!m.effr.empty()) throw DataError(ctx + ": only the first month may omit the rate");
      m.effr.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      m.effr.push_back(parse_number(effr, ctx) / 100.0);
    }
    const double rate = parse_number(trim(fx), ctx);
    if (!(rate > 0.0)) throw DataError(ctx + ": fx must be positive");
    m.fx.push_back(rate);
  }
  for (std::size_t i = 1; i < m.dates.size(); ++i) {
    if (m.dates[i].ordinal() != m.dates[i - 1].ordinal() + 1) {
      throw DataError(path.string() + ": dates must be consecutive months");
    }
  }
  return m;
}

double bond_count(double spend, double face_usd, double tenor_months, double yield_decimal) {
  if (!(spend > 0.0 && face_usd > 0.0 && tenor_months > 0.0)) {
    throw std::invalid_argument("bond_count: spend, face and tenor must be positive");
  }
  return spend / (face_usd * std::exp(-(tenor_months / 12.0) * yield_decimal));
}

double interpolate_curve(const std::vector<double>& tenors, const Eigen::Ref<const Eigen::VectorXd>& curve,
                         double tenor) {
  if (tenors.empty() || static_cast<Eigen::Index>(tenors.size()) != curve.size()) {
    throw std::invalid_argument("interpolate_curve: no forecast curve");
  }
  if (tenor <= tenors.front()) return curve(0);
  if (tenor >= tenors.back()) return curve(curve.size() - 1);
  const auto it = std::upper_bound(tenors.begin(), tenors.end(), tenor);
  const auto hi = static_cast<Eigen::Index>(it - tenors.begin());
  const Eigen::Index lo = hi - 1;
  const double w = (tenor - tenors[lo]) / (tenors[hi] - tenors[lo]);
  return curve(lo) + w * (curve(hi) - curve(lo));
}

double bond_leg(const std::vector<Holding>& holdings, double face_value_gbp, double fx,
                const std::vector<double>& tenors, const Eigen::Ref<const Eigen::VectorXd>& curve) {
  const double face_usd = face_value_gbp * fx;
  double total = 0.0;
  for (const Holding& h : holdings) {
    if (h.remaining <= 0) continue;
    const double tau = h.remaining;
    const double y = interpolate_curve(tenors, curve, tau) / 100.0;
    total += h.count * face_usd * std::exp(-(tau / 12.0) * y);
  }
  return total;
}

std::vector<MonthState> run_ladder(const LadderConfig& config, const MarketSeries& market,
                                   const std::vector<double>& tenors, const Eigen::MatrixXd& curves,
                                   std::vector<Holding>* inventory) {
  config.validate();
  const int k = config.investments - 1;
  if (curves.rows() < k + 1) throw std::invalid_argument("run_ladder: need a curve for every month");
  if (market.fx.size() < static_cast<std::size_t>(k + 1) || market.effr.size() < static_cast<std::size_t>(k + 1)) {
    throw std::invalid_argument("run_ladder: market series shorter than the investment schedule");
  }

  std::vector<Holding> held;
  std::vector<MonthState> states;
  auto buy = [&](int month) {
    const double face_usd = config.face_value_gbp * market.fx[month];
    const double y = interpolate_curve(tenors, curves.row(month).transpose(), config.bond_tenor) / 100.0;
    held.push_back(Holding{month, bond_count(config.monthly_spend, face_usd, config.bond_tenor, y),
                           config.bond_tenor});
  };

  double cash = config.initial_wealth - config.monthly_spend;
  if (cash < 0.0) throw std::runtime_error("run_ladder: initial wealth does not cover the first purchase");
  buy(0);
  states.push_back(
      {cash, bond_leg(held, config.face_value_gbp, market.fx[0], tenors, curves.row(0).transpose())});

  for (int i = 1; i <= k; ++i) {
    const double r = market.effr[i];
    if (!std::isfinite(r)) throw std::invalid_argument("run_ladder: missing rate for month " + std::to_string(i));
    cash = (1.0 + r / 12.0) * cash;
    const double face_usd = config.face_value_gbp * market.fx[i];
    for (Holding& h : held) {
      if (h.remaining <= 0) continue;
      --h.remaining;
      if (h.remaining == 0) cash += h.count * face_usd;
    }
    if (cash < config.monthly_spend) {
      throw std::runtime_error("run_ladder: cash " + format_double(cash) + " cannot cover the purchase in month " +
                               std::to_string(i));
    }
    cash -= config.monthly_spend;
    buy(i);
    states.push_back({cash, bond_leg(held, config.face_value_gbp, market.fx[i], tenors, curves.row(i).transpose())});
  }
  if (inventory != nullptr) *inventory = held;
  return states;
}

LadderPath simulate_ladder(const LadderConfig& config, const MarketSeries& market,
                           const Eigen::Ref<const Eigen::VectorXd>& known_curve, const ForecastResult& forecast,
                           const std::vector<double>& tenors, int n, std::uint64_t seed) {
  config.validate();
  const int k = config.investments - 1;
  if (forecast.horizon < k) throw std::invalid_argument("simulate_ladder: forecast horizon shorter than the schedule");
  if (n < 1) throw std::invalid_argument("simulate_ladder: need at least one path");
  if (market.dates.size() < static_cast<std::size_t>(k + 1)) {
    throw std::invalid_argument("simulate_ladder: market series shorter than the schedule");
  }
  const auto N = static_cast<Eigen::Index>(tenors.size());
  if (known_curve.size() != N || forecast.yields.cols() != N) {
    throw std::invalid_argument("simulate_ladder: curve length does not match the tenor grid");
  }

  std::vector<GaussianSampler> samplers;
  for (int s = 0; s < k; ++s) samplers.emplace_back(forecast.yields.row(s).transpose(), forecast.covariances[s]);

  Eigen::MatrixXd curves(k + 1, N);
  curves.row(0) = known_curve.transpose();
  curves.bottomRows(k) = forecast.yields.topRows(k);

  LadderPath out;
  out.dates.assign(market.dates.begin(), market.dates.begin() + k + 1);
  const std::vector<MonthState> central = run_ladder(config, market, tenors, curves, &out.inventory);
  out.cash.resize(k + 1);
  out.bond_value.resize(k + 1);
  for (int i = 0; i <= k; ++i) {
    out.cash(i) = central[i].cash;
    out.bond_value(i) = central[i].bonds;
  }

  out.values.resize(n, k + 1);
  for (int j = 0; j < n; ++j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    for (int s = 0; s < k; ++s) curves.row(s + 1) = samplers[s].draw(rng).transpose();
    const std::vector<MonthState> states = run_ladder(config, market, tenors, curves);
    for (int i = 0; i <= k; ++i) out.values(j, i) = states[i].value();
  }

  out.mean = out.values.colwise().mean().transpose();
  out.lo.resize(k + 1);
  out.hi.resize(k + 1);
  for (int i = 0; i <= k; ++i) {
    const Eigen::VectorXd col = out.values.col(i);
    const std::vector<double> v(col.data(), col.data() + col.size());
    out.lo(i) = percentile(v, 0.025);
    out.hi(i) = percentile(v, 0.975);
  }
  out.var5 = n >= 100 ? var_5(out.values) : out.lo;
  return out;
}

Eigen::VectorXd var_5(const Eigen::MatrixXd& values) {
  if (values.rows() < 100) throw std::invalid_argument("var_5: need at least 100 paths");
  Eigen::VectorXd out(values.cols());
  for (Eigen::Index i = 0; i < values.cols(); ++i) {
    const Eigen::VectorXd col = values.col(i);
    out(i) = percentile(std::vector<double>(col.data(), col.data() + col.size()), 0.05);
  }
  return out;
}

void write_ladder_csv(const LadderPath& path, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "month,date,mean,lo,hi,var5,cash,bond_value\n";
  for (Eigen::Index i = 0; i < path.mean.size(); ++i) {
    out << i << ',' << path.dates[static_cast<std::size_t>(i)].to_string() << ',' << format_double(path.mean(i))
        << ',' << format_double(path.lo(i)) << ',' << format_double(path.hi(i)) << ','
        << format_double(path.var5(i)) << ',' << format_double(path.cash(i)) << ','
        << format_double(path.bond_value(i)) << '\n';
  }
}

}  // namespace dnsfr
