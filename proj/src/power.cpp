#include "stratma/power.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "stratma/core.hpp"
#include "stratma/error.hpp"
#include "stratma/stats.hpp"

namespace stratma {

double PowerArm::N() const {
  double n = 0.0;
  for (const auto& s : strata) n += s.N;
  return n;
}

void PowerDesign::check() const {
  if (arms.empty()) throw Error(ErrorCode::InvalidArgument, "power design has no arms");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (!(power > 0.0 && power < 1.0)) throw Error(ErrorCode::InvalidArgument, "power must lie in (0, 1)");
  for (const auto& a : arms) {
    if (a.strata.empty()) throw Error(ErrorCode::InvalidArgument, "power design arm without strata");
    if (!(a.y_var >= 0.0)) throw Error(ErrorCode::InvalidArgument, "outcome variance must be >= 0");
    for (const auto& s : a.strata) {
      if (!(s.N > 0.0)) throw Error(ErrorCode::InvalidArgument, "stratum sizes must be positive");
      if (!(s.resid_var >= 0.0)) throw Error(ErrorCode::InvalidArgument, "residual variances must be >= 0");
    }
  }
}

double PowerDesign::multiplier() const {
  return normal_quantile(1.0 - alpha / 2.0) + normal_quantile(power);
}

double residual_term(const PowerArm& arm, PowerMethod method) {
  const double N = arm.N();
  double ebar = 0.0;
  for (const auto& s : arm.strata) ebar += s.N / N * s.resid_mean;
  double w = 0.0;
  for (const auto& s : arm.strata) {
    w += s.N / N * s.resid_var;
    if (method == PowerMethod::srs) w += s.N / N * (s.resid_mean - ebar) * (s.resid_mean - ebar);
  }
  return w;
}

double standard_error(const PowerDesign& d, double h, PowerMethod method) {
  if (!(h > 0.0 && h <= 1.0)) throw Error(ErrorCode::InvalidArgument, "h must lie in (0, 1]");
  double v = 0.0;
  for (const auto& a : d.arms) {
    const double N = a.N();
    v += a.y_var / N + (1.0 - h) / (h * N) * residual_term(a, method);
  }
  return std::sqrt(v);
}

std::vector<MdesPoint> mdes_curve(const PowerDesign& d, const std::vector<double>& h_grid) {
  d.check();
  const double m = d.multiplier();
  std::vector<MdesPoint> out;
  for (double h : h_grid) {
    out.push_back({h, m * standard_error(d, h, PowerMethod::srs),
                   m * standard_error(d, h, PowerMethod::stratified_proportional)});
  }
  return out;
}

std::vector<double> parse_h_grid(const std::string& text) {
  std::vector<double> out;
  auto num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad h grid '" + text + "'");
    }
  };
  if (text.find(':') != std::string::npos) {
    const auto a = text.find(':');
    const auto b = text.find(':', a + 1);
    if (b == std::string::npos) throw Error(ErrorCode::InvalidArgument, "h grid needs start:stop:step");
    const double lo = num(text.substr(0, a)), hi = num(text.substr(a + 1, b - a - 1)),
                 step = num(text.substr(b + 1));
    if (!(step > 0.0) || hi < lo) throw Error(ErrorCode::InvalidArgument, "bad h grid '" + text + "'");
    const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
    // Round to the step's decimal precision so 0.05 + 2*0.05 prints as 0.15.
    for (int i = 0; i <= n; ++i) out.push_back(std::round((lo + i * step) * 1e12) / 1e12);
  } else {
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      out.push_back(num(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  for (double h : out) {
    if (!(h > 0.0 && h <= 1.0)) throw Error(ErrorCode::InvalidArgument, "h values must lie in (0, 1]");
  }
  return out;
}

PowerDesign read_power_design(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "design CSV is empty");
  const auto header = split_csv_row(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"arm", "stratum", "N", "resid_mean", "resid_var", "y_var"}) {
    if (!col.count(need)) throw Error(ErrorCode::MissingColumn, std::string("design CSV lacks column '") + need + "'");
  }
  std::map<int, PowerArm> arms;
  std::map<int, bool> seen;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_row(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                                               " fields, expected " + std::to_string(header.size()));
    }
    auto get = [&](const char* c) {
      try {
        return std::stod(f[col[c]]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::NonNumericValue, "row " + std::to_string(row) + ": '" + c + "' is not numeric");
      }
    };
    const int arm = static_cast<int>(get("arm"));
    PowerArm& a = arms[arm];
    if (!seen[arm]) {
      a.y_var = get("y_var");
      seen[arm] = true;
    }
    a.strata.push_back({get("N"), get("resid_mean"), get("resid_var")});
  }
  PowerDesign d;
  for (auto& [z, a] : arms) d.arms.push_back(std::move(a));
  return d;
}

void write_mdes_csv(std::ostream& out, const std::vector<MdesPoint>& curve) {
  out << "h,mdes_srs,mdes_stratified\n";
  for (const auto& p : curve) {
    out << format_double(p.h) << ',' << format_double(p.mdes_srs) << ',' << format_double(p.mdes_stratified) << '\n';
  }
}

}  // namespace stratma
