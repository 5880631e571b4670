#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dnsfr {

/// Raised for malformed or inconsistent input data (CSV contents, panel shapes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Calendar month, serialized as YYYY-MM.
struct MonthStamp {
  int year = 1970;
  int month = 1;  // 1..12

  [[nodiscard]] int ordinal() const { return year * 12 + (month - 1); }
  [[nodiscard]] static MonthStamp from_ordinal(int ordinal);
  /// Accepts YYYY-MM or YYYY-MM-DD (the day is dropped).
  [[nodiscard]] static MonthStamp parse(std::string_view text);
  [[nodiscard]] std::string to_string() const;
  [[nodiscard]] MonthStamp plus_months(int k) const { return from_ordinal(ordinal() + k); }

  friend bool operator==(const MonthStamp&, const MonthStamp&) = default;
  friend auto operator<=>(const MonthStamp& a, const MonthStamp& b) {
    return a.ordinal() <=> b.ordinal();
  }
};

/// Strictly increasing times to maturity, in months.
class MaturityGrid {
 public:
  explicit MaturityGrid(std::vector<double> tenors);

  /// 1, 3, 6, 9 months and 1, 2, 3, 5, 7, 10, 20, 30 years.
  static MaturityGrid canonical();

  [[nodiscard]] std::size_t size() const { return tenors_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return tenors_[i]; }
  [[nodiscard]] const std::vector<double>& tenors() const { return tenors_; }
  [[nodiscard]] std::optional<std::size_t> index_of(double tenor) const;

  friend bool operator==(const MaturityGrid&, const MaturityGrid&) = default;

 private:
  std::vector<double> tenors_;
};

/// T dated yield curves on a maturity grid. Yields are annualized percent;
/// cells with mask == false carry NaN.
struct YieldPanel {
  std::vector<MonthStamp> dates;
  Eigen::MatrixXd values;  // T x N
  Mask mask;               // T x N, true = recorded
  MaturityGrid grid = MaturityGrid::canonical();

  [[nodiscard]] Eigen::Index periods() const { return values.rows(); }
  [[nodiscard]] Eigen::Index tenor_count() const { return values.cols(); }
  [[nodiscard]] bool complete() const { return mask.all(); }

  /// Throws DataError when shapes, date spacing or mask/value consistency are violated.
  void validate() const;

  /// Rows [first, first + count).
  [[nodiscard]] YieldPanel slice(Eigen::Index first, Eigen::Index count) const;
};

/// Builds a complete panel (mask all ones) from values.
YieldPanel make_panel(std::vector<MonthStamp> dates, Eigen::MatrixXd values, MaturityGrid grid);

/// Consecutive months starting at `first`.
std::vector<MonthStamp> month_range(MonthStamp first, int count);

/// Reads a CSV with header "date,<tenor>,<tenor>,..." where tenors are months
/// ("84") or carry an M/Y suffix ("6M", "10Y"). Empty or non-numeric cells are
/// missing. Rows are sorted by date.
YieldPanel load_yield_csv(const std::filesystem::path& path);

/// As above, but the header tenors must match `grid` as a set; columns are
/// reordered to the grid order.
YieldPanel load_yield_csv(const std::filesystem::path& path, const MaturityGrid& grid);

/// Writes the panel in the same format load_yield_csv reads. Values use the
/// shortest representation that round-trips exactly.
void write_yield_csv(const YieldPanel& panel, const std::filesystem::path& path);

/// Fills holes by linear interpolation in tenor between the nearest recorded
/// tenors of the same date; flat beyond the recorded range.
YieldPanel interpolate_missing(const YieldPanel& panel);

/// Ordinary least squares fit of the three static Nelson-Siegel factors to one curve.
Eigen::Vector3d fit_static_ns(const std::vector<double>& tenors, const std::vector<double>& yields,
                              double lambda);

/// Per-date static Nelson-Siegel factors (T x 3) and residuals (T x N, NaN where missing).
struct StaticNsFit {
  Eigen::MatrixXd factors;
  Eigen::MatrixXd residuals;
};
StaticNsFit fit_static_ns(const YieldPanel& panel, double lambda);

/// Re-expresses the panel on `target`: tenors present in the source grid keep
/// their recorded values, the rest come from the per-date static NS curve.
YieldPanel match_maturities(const YieldPanel& panel, const MaturityGrid& target, double lambda);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

}  // namespace dnsfr
