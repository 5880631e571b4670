#include "dnsfr/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dnsfr/nelson_siegel.hpp"

namespace dnsfr {
namespace {

constexpr double kTenorMatchTolerance = 1e-9;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<double> parse_tenor(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double scale = 1.0;
  const char suffix = s.back();
  if (suffix == 'M' || suffix == 'm') {
    s.remove_suffix(1);
  } else if (suffix == 'Y' || suffix == 'y') {
    scale = 12.0;
    s.remove_suffix(1);
  }
  auto value = parse_number(s);
  if (!value || *value <= 0.0) return std::nullopt;
  return *value * scale;
}

}  // namespace

MonthStamp MonthStamp::from_ordinal(int ordinal) {
  MonthStamp m;
  m.year = ordinal >= 0 ? ordinal / 12 : -((-ordinal + 11) / 12);
  m.month = ordinal - m.year * 12 + 1;
  return m;
}

MonthStamp MonthStamp::parse(std::string_view text) {
  text = trim(text);
  auto bad = [&] { return DataError("invalid month stamp '" + std::string(text) + "'"); };
  if (text.size() != 7 && text.size() != 10) throw bad();
  if (text[4] != '-' || (text.size() == 10 && text[7] != '-')) throw bad();
  int year = 0;
  int month = 0;
  auto r1 = std::from_chars(text.data(), text.data() + 4, year);
  auto r2 = std::from_chars(text.data() + 5, text.data() + 7, month);
  if (r1.ec != std::errc() || r1.ptr != text.data() + 4 || r2.ec != std::errc() ||
      r2.ptr != text.data() + 7 || month < 1 || month > 12) {
    throw bad();
  }
  if (text.size() == 10) {
    int day = 0;
    auto r3 = std::from_chars(text.data() + 8, text.data() + 10, day);
    if (r3.ec != std::errc() || day < 1 || day > 31) throw bad();
  }
  return MonthStamp{year, month};
}

std::string MonthStamp::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

MaturityGrid::MaturityGrid(std::vector<double> tenors) : tenors_(std::move(tenors)) {
  if (tenors_.size() < 4) throw std::invalid_argument("MaturityGrid: need at least 4 tenors");
  for (std::size_t i = 0; i < tenors_.size(); ++i) {
    if (!(tenors_[i] > 0.0) || !std::isfinite(tenors_[i])) {
      throw std::invalid_argument("MaturityGrid: tenors must be positive");
    }
    if (i > 0 && !(tenors_[i] > tenors_[i - 1])) {
      throw std::invalid_argument("MaturityGrid: tenors must be strictly increasing");
    }
  }
}

MaturityGrid MaturityGrid::canonical() {
  return MaturityGrid({1, 3, 6, 9, 12, 24, 36, 60, 84, 120, 240, 360});
}

std::optional<std::size_t> MaturityGrid::index_of(double tenor) const {
  for (std::size_t i = 0; i < tenors_.size(); ++i) {
    if (std::abs(tenors_[i] - tenor) <= kTenorMatchTolerance) return i;
  }
  return std::nullopt;
}

void YieldPanel::validate() const {
  const auto T = static_cast<Eigen::Index>(dates.size());
  const auto N = static_cast<Eigen::Index>(grid.size());
  if (values.rows() != T || values.cols() != N || mask.rows() != T || mask.cols() != N) {
    throw DataError("YieldPanel: shape mismatch between dates, grid, values and mask");
  }
  for (Eigen::Index t = 1; t < T; ++t) {
    if (dates[t].ordinal() != dates[t - 1].ordinal() + 1) {
      throw DataError("YieldPanel: dates must be consecutive months (" + dates[t - 1].to_string() +
                      " -> " + dates[t].to_string() + ")");
    }
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < N; ++i) {
      if (mask(t, i) && !std::isfinite(values(t, i))) {
        throw DataError("YieldPanel: non-finite recorded value at " + dates[t].to_string());
      }
    }
  }
}

YieldPanel YieldPanel::slice(Eigen::Index first, Eigen::Index count) const {
  if (first < 0 || count < 0 || first + count > periods()) {
    throw std::out_of_range("YieldPanel::slice out of range");
  }
  YieldPanel out;
  out.dates.assign(dates.begin() + first, dates.begin() + first + count);
  out.values = values.middleRows(first, count);
  out.mask = mask.middleRows(first, count);
  out.grid = grid;
  return out;
}

YieldPanel make_panel(std::vector<MonthStamp> dates, Eigen::MatrixXd values, MaturityGrid grid) {
  YieldPanel p;
  p.dates = std::move(dates);
  p.values = std::move(values);
  p.mask = Mask::Constant(p.values.rows(), p.values.cols(), true);
  p.grid = std::move(grid);
  p.validate();
  return p;
}

std::vector<MonthStamp> month_range(MonthStamp first, int count) {
  std::vector<MonthStamp> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) out.push_back(first.plus_months(k));
  return out;
}

YieldPanel load_yield_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string where = path.string();

  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": empty file");
  auto header = split_commas(line);
  if (header.size() < 2) throw DataError(where + ":1: no tenor columns");

  std::vector<double> tenors;
  std::vector<std::size_t> columns;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (auto tenor = parse_tenor(header[c])) {
      tenors.push_back(*tenor);
      columns.push_back(c);
    }
  }
  if (tenors.empty()) throw DataError(where + ":1: no parsable tenor columns");

  struct Row {
    MonthStamp date;
    std::vector<std::optional<double>> cells;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_commas(line);
    Row row;
    try {
      row.date = MonthStamp::parse(fields[0]);
    } catch (const DataError& e) {
      throw DataError(where + ":" + std::to_string(line_no) + ": " + e.what());
    }
    for (auto c : columns) {
      row.cells.push_back(c < fields.size() ? parse_number(fields[c]) : std::nullopt);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(where + ": no data rows");

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].date == rows[r - 1].date) {
      throw DataError(where + ": duplicate date " + rows[r].date.to_string());
    }
  }

  // Column order follows increasing tenor.
  std::vector<std::size_t> order(tenors.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tenors[a] < tenors[b]; });
  std::vector<double> sorted_tenors;
  for (auto k : order) sorted_tenors.push_back(tenors[k]);

  YieldPanel panel;
  try {
    panel.grid = MaturityGrid(sorted_tenors);
  } catch (const std::invalid_argument& e) {
    throw DataError(where + ":1: " + e.what());
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  const auto N = static_cast<Eigen::Index>(order.size());
  panel.values = Eigen::MatrixXd::Constant(T, N, std::numeric_limits<double>::quiet_NaN());
  panel.mask = Mask::Constant(T, N, false);
  for (Eigen::Index t = 0; t < T; ++t) {
    panel.dates.push_back(rows[t].date);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto& cell = rows[t].cells[order[i]];
      if (cell) {
        panel.values(t, i) = *cell;
        panel.mask(t, i) = true;
      }
    }
  }
  try {
    panel.validate();
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  }
  return panel;
}

YieldPanel load_yield_csv(const std::filesystem::path& path, const MaturityGrid& grid) {
  YieldPanel panel = load_yield_csv(path);
  if (!(panel.grid == grid)) {
    throw DataError(path.string() + ": header tenors do not match the requested maturity grid");
  }
  return panel;
}

std::string format_double(double value) {
  // Shortest round-trip text; fixed notation across the magnitudes seen in yields and money.
  const double mag = std::fabs(value);
  const bool use_fixed = mag == 0.0 || (mag >= 1e-5 && mag < 1e16);
  char buf[64];
  const auto r = use_fixed ? std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed)
                           : std::to_chars(buf, buf + sizeof buf, value);
  if (r.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, r.ptr);
}

void write_yield_csv(const YieldPanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date";
  for (double tenor : panel.grid.tenors()) out << ',' << format_double(tenor);
  out << '\n';
  for (Eigen::Index t = 0; t < panel.periods(); ++t) {
    out << panel.dates[t].to_string();
    for (Eigen::Index i = 0; i < panel.tenor_count(); ++i) {
      out << ',';
      if (panel.mask(t, i)) out << format_double(panel.values(t, i));
    }
    out << '\n';
  }
}

YieldPanel interpolate_missing(const YieldPanel& panel) {
  YieldPanel out = panel;
  const auto& tau = panel.grid.tenors();
  for (Eigen::Index t = 0; t < panel.periods(); ++t) {
    std::vector<Eigen::Index> rec;
    for (Eigen::Index i = 0; i < panel.tenor_count(); ++i) {
      if (panel.mask(t, i)) rec.push_back(i);
    }
    if (rec.size() < 2) {
      throw DataError("interpolate_missing: fewer than 2 recorded tenors on " + panel.dates[t].to_string());
    }
    for (Eigen::Index i = 0; i < panel.tenor_count(); ++i) {
      if (panel.mask(t, i)) continue;
      double filled;
      if (i < rec.front()) {
        filled = panel.values(t, rec.front());
      } else if (i > rec.back()) {
        filled = panel.values(t, rec.back());
      } else {
        auto hi = std::upper_bound(rec.begin(), rec.end(), i);
        const Eigen::Index right = *hi;
        const Eigen::Index left = *(hi - 1);
        const double w = (tau[i] - tau[left]) / (tau[right] - tau[left]);
        filled = panel.values(t, left) + w * (panel.values(t, right) - panel.values(t, left));
      }
      out.values(t, i) = filled;
      out.mask(t, i) = true;
    }
  }
  return out;
}

Eigen::Vector3d fit_static_ns(const std::vector<double>& tenors, const std::vector<double>& yields,
                              double lambda) {
  if (tenors.size() != yields.size()) throw std::invalid_argument("fit_static_ns: size mismatch");
  if (tenors.size() < 3) throw DataError("fit_static_ns: need at least 3 recorded tenors");
  const auto n = static_cast<Eigen::Index>(tenors.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = loading_row(tenors[i], lambda);
    y(i) = yields[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw DataError("fit_static_ns: rank-deficient Nelson-Siegel design");
  return qr.solve(y);
}

StaticNsFit fit_static_ns(const YieldPanel& panel, double lambda) {
  StaticNsFit fit;
  fit.factors.resize(panel.periods(), 3);
  fit.residuals = Eigen::MatrixXd::Constant(panel.periods(), panel.tenor_count(),
                                            std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 0; t < panel.periods(); ++t) {
    std::vector<double> tau;
    std::vector<double> y;
    for (Eigen::Index i = 0; i < panel.tenor_count(); ++i) {
      if (panel.mask(t, i)) {
        tau.push_back(panel.grid[i]);
        y.push_back(panel.values(t, i));
      }
    }
    Eigen::Vector3d f;
    try {
      f = fit_static_ns(tau, y, lambda);
    } catch (const DataError& e) {
      throw DataError(panel.dates[t].to_string() + ": " + e.what());
    }
    fit.factors.row(t) = f.transpose();
    for (Eigen::Index i = 0; i < panel.tenor_count(); ++i) {
      if (panel.mask(t, i)) fit.residuals(t, i) = panel.values(t, i) - loading_row(panel.grid[i], lambda).dot(f);
    }
  }
  return fit;
}

YieldPanel match_maturities(const YieldPanel& panel, const MaturityGrid& target, double lambda) {
  const StaticNsFit fit = fit_static_ns(panel, lambda);
  YieldPanel out;
  out.dates = panel.dates;
  out.grid = target;
  const auto N = static_cast<Eigen::Index>(target.size());
  out.values.resize(panel.periods(), N);
  out.mask = Mask::Constant(panel.periods(), N, true);
  for (Eigen::Index j = 0; j < N; ++j) {
    const auto source = panel.grid.index_of(target[j]);
    const Eigen::RowVector3d row = loading_row(target[j], lambda);
    for (Eigen::Index t = 0; t < panel.periods(); ++t) {
      const auto src = source ? static_cast<Eigen::Index>(*source) : Eigen::Index{-1};
      if (src >= 0 && panel.mask(t, src)) {
        out.values(t, j) = panel.values(t, src);
      } else {
        out.values(t, j) = row.dot(fit.factors.row(t));
      }
    }
  }
  return out;
}

}  // namespace dnsfr
