#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "dnsfr/forecasting.hpp"
#include "dnsfr/market_data.hpp"

namespace dnsfr {

struct LadderConfig {
  double initial_wealth = 12'000'000.0;  // USD
  int investments = 13;                  // k + 1 purchases, months 0..k
  double monthly_spend = 1'000'000.0;    // USD per purchase
  int bond_tenor = 12;                   // months
  double face_value_gbp = 100.0;

  void validate() const;
};

/// Month 0..k market inputs. effr holds annualized decimal rates and is unused
/// (NaN) at month 0; fx is USD per GBP.
struct MarketSeries {
  std::vector<MonthStamp> dates;
  std::vector<double> effr;
  std::vector<double> fx;
};

/// Reads "date,effr_percent,fx". The first row's rate may be "-" or empty.
MarketSeries load_market_csv(const std::filesystem::path& path);

/// Bonds bought for `spend` USD: spend / (face_usd e^{-(tenor / 12) y}), y decimal.
double bond_count(double spend, double face_usd, double tenor_months, double yield_decimal);

struct Holding {
  int purchase_month = 0;
  double count = 0.0;
  int remaining = 0;  // months to maturity
};

/// Linear interpolation in tenor, flat beyond the end points.
double interpolate_curve(const std::vector<double>& tenors, const Eigen::Ref<const Eigen::VectorXd>& curve,
                         double tenor);

/// Value of the held bonds (remaining > 0) at the given curve (percent) and fx.
double bond_leg(const std::vector<Holding>& holdings, double face_value_gbp, double fx,
                const std::vector<double>& tenors, const Eigen::Ref<const Eigen::VectorXd>& curve);

struct MonthState {
  double cash = 0.0;
  double bonds = 0.0;
  [[nodiscard]] double value() const { return cash + bonds; }
};

/// One pass of the month loop. `curves` has k + 1 rows (percent yields on
/// `tenors`): row 0 is the known curve at month 0, row i the curve at month i.
/// Throws std::runtime_error when cash cannot cover a purchase.
std::vector<MonthState> run_ladder(const LadderConfig& config, const MarketSeries& market,
                                   const std::vector<double>& tenors, const Eigen::MatrixXd& curves,
                                   std::vector<Holding>* inventory = nullptr);

struct LadderPath {
  std::vector<MonthStamp> dates;
  Eigen::VectorXd mean;
  Eigen::VectorXd lo;    // 2.5th percentile
  Eigen::VectorXd hi;    // 97.5th percentile
  Eigen::VectorXd var5;  // 5th percentile
  /// Ledger of the run at the forecast mean curves.
  Eigen::VectorXd cash;
  Eigen::VectorXd bond_value;
  std::vector<Holding> inventory;
  Eigen::MatrixXd values;  // paths x months
};

/// Monte Carlo ladder over n yield paths drawn independently per step from the
/// forecast marginals. Path j uses its own stream derived from (seed, j).
LadderPath simulate_ladder(const LadderConfig& config, const MarketSeries& market,
                           const Eigen::Ref<const Eigen::VectorXd>& known_curve, const ForecastResult& forecast,
                           const std::vector<double>& tenors, int n, std::uint64_t seed);

/// Per-month 5th percentile of `values` (paths x months); needs at least 100 paths.
Eigen::VectorXd var_5(const Eigen::MatrixXd& values);

/// month, date, mean, lo, hi, var5, cash, bond_value.
void write_ladder_csv(const LadderPath& path, const std::filesystem::path& file);

}  // namespace dnsfr
