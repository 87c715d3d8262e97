#include "stratma/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "stratma/sampling.hpp"

namespace stratma {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NonNumericValue: return "NonNumericValue";
    case ErrorCode::InvalidArm: return "InvalidArm";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::CodedUnitMissingY: return "CodedUnitMissingY";
    case ErrorCode::BudgetExceedsArm: return "BudgetExceedsArm";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::AllocationInfeasible: return "AllocationInfeasible";
    case ErrorCode::AllZeroSD: return "AllZeroSD";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UncodedUnit: return "UncodedUnit";
    case ErrorCode::EmptyArmSample: return "EmptyArmSample";
    case ErrorCode::StratumDrawMismatch: return "StratumDrawMismatch";
    case ErrorCode::StratumTooSmall: return "StratumTooSmall";
    case ErrorCode::StratumTooSmallForVariance: return "StratumTooSmallForVariance";
    case ErrorCode::AllValuesEqual: return "AllValuesEqual";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::AllFiltered: return "AllFiltered";
    case ErrorCode::InvalidR2: return "InvalidR2";
    case ErrorCode::NonpositiveWeights: return "NonpositiveWeights";
    case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "normal quantile needs p in (0, 1)");
  }
  // Acklam's rational approximation followed by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// ---------------------------------------------------------------------------
// PopulationTable

PopulationTable::PopulationTable(std::vector<UnitRecord> units, ArmMode mode)
    : units_(std::move(units)), mode_(mode) {
  members_.assign(n_arms(), {});
  index_.reserve(units_.size());
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const UnitRecord& u = units_[i];
    if (!index_.emplace(u.id, i).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate unit id '" + u.id + "'", {u.id});
    }
    if (!std::isfinite(u.y_hat)) {
      throw Error(ErrorCode::NonFiniteValue, "non-finite surrogate for unit '" + u.id + "'", {u.id});
    }
    if (u.y && !std::isfinite(*u.y)) {
      throw Error(ErrorCode::NonFiniteValue, "non-finite outcome for unit '" + u.id + "'", {u.id});
    }
    if (mode_ == ArmMode::two_arm) {
      if (!u.arm || (*u.arm != 0 && *u.arm != 1)) {
        throw Error(ErrorCode::InvalidArm, "unit '" + u.id + "' needs arm 0 or 1", {u.id});
      }
      members_[*u.arm].push_back(i);
    } else {
      if (u.arm && *u.arm != 0) {
        throw Error(ErrorCode::ModeMismatch,
                    "single-arm table carries arm " + std::to_string(*u.arm) + " for '" + u.id + "'",
                    {u.id});
      }
      members_[0].push_back(i);
    }
  }
}

std::optional<std::size_t> PopulationTable::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool PopulationTable::fully_coded() const {
  return std::all_of(units_.begin(), units_.end(), [](const UnitRecord& u) { return u.y.has_value(); });
}

VectorXd PopulationTable::y_hat() const {
  VectorXd v(static_cast<Eigen::Index>(units_.size()));
  for (std::size_t i = 0; i < units_.size(); ++i) v[static_cast<Eigen::Index>(i)] = units_[i].y_hat;
  return v;
}

// ---------------------------------------------------------------------------
// StrataAssignment

StrataAssignment::StrataAssignment(const PopulationTable& pop, std::vector<int> labels)
    : labels_(std::move(labels)) {
  if (labels_.size() != pop.size()) {
    throw Error(ErrorCode::InvalidArgument, "stratum label count does not match population size");
  }
  counts_.assign(pop.n_arms(), {});
  members_.assign(pop.n_arms(), {});
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int k = labels_[i];
    if (k < 0) {
      throw Error(ErrorCode::InvalidArgument, "negative stratum label for '" + pop.unit(i).id + "'",
                  {pop.unit(i).id});
    }
    auto& c = counts_[pop.arm_of(i)];
    if (static_cast<int>(c.size()) <= k) c.resize(k + 1, 0);
    ++c[k];
  }
  for (int z = 0; z < pop.n_arms(); ++z) {
    members_[z].assign(counts_[z].size(), {});
    for (std::size_t i : pop.arm_members(z)) members_[z][labels_[i]].push_back(i);
    for (auto& m : members_[z]) {
      std::sort(m.begin(), m.end(),
                [&](std::size_t a, std::size_t b) { return pop.unit(a).id < pop.unit(b).id; });
    }
  }
}

StrataAssignment StrataAssignment::trivial(const PopulationTable& pop) {
  return StrataAssignment(pop, std::vector<int>(pop.size(), 0));
}

namespace {

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  if (first == last) return std::nullopt;
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

StrataAssignment strata_from_labels(const PopulationTable& pop,
                                    const std::vector<std::string>& raw_labels) {
  if (raw_labels.size() != pop.size()) {
    throw Error(ErrorCode::InvalidArgument, "stratum label count does not match population size");
  }
  std::vector<int> labels(pop.size(), 0);
  for (int z = 0; z < pop.n_arms(); ++z) {
    const auto& members = pop.arm_members(z);
    bool numeric = true;
    for (std::size_t i : members) numeric = numeric && parse_double(raw_labels[i]).has_value();
    std::vector<std::string> levels;
    for (std::size_t i : members) levels.push_back(trim(raw_labels[i]));
    if (numeric) {
      std::sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
        return *parse_double(a) < *parse_double(b);
      });
      levels.erase(std::unique(levels.begin(), levels.end(),
                               [](const std::string& a, const std::string& b) {
                                 return *parse_double(a) == *parse_double(b);
                               }),
                   levels.end());
    } else {
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    }
    for (std::size_t i : members) {
      const std::string v = trim(raw_labels[i]);
      auto it = numeric ? std::find_if(levels.begin(), levels.end(),
                                       [&](const std::string& l) {
                                         return *parse_double(l) == *parse_double(v);
                                       })
                        : std::lower_bound(levels.begin(), levels.end(), v);
      labels[i] = static_cast<int>(it - levels.begin());
    }
  }
  return StrataAssignment(pop, std::move(labels));
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate(const PopulationTable& pop, const StrataAssignment* strata) {
  ValidationReport report;
  if (pop.size() == 0) {
    report.errors.push_back({"EmptyPopulation", "population has no units", {}});
  }
  if (pop.mode() == ArmMode::two_arm) {
    for (int z = 0; z < 2; ++z) {
      if (pop.arm_size(z) == 0) {
        report.errors.push_back(
            {"EmptyArm(" + std::to_string(z) + ")", "no units assigned to arm " + std::to_string(z), {}});
      }
    }
  }
  if (strata) {
    if (strata->labels().size() != pop.size() || strata->n_arms() != pop.n_arms()) {
      report.errors.push_back({"ModeMismatch", "strata do not match the population layout", {}});
      return report;
    }
    for (int z = 0; z < strata->n_arms(); ++z) {
      const auto& counts = strata->counts(z);
      for (std::size_t k = 0; k < counts.size(); ++k) {
        const std::string where =
            "arm " + std::to_string(z) + " stratum " + std::to_string(k + 1);
        if (counts[k] == 0) {
          report.errors.push_back({"EmptyStratum", where + " has no units", {}});
        } else if (counts[k] == 1) {
          std::vector<std::string> ids;
          for (std::size_t i : strata->members(z, static_cast<int>(k))) ids.push_back(pop.unit(i).id);
          report.warnings.push_back(
              {"SingletonStratum", where + " has one unit; within-stratum variance undefined", ids});
        }
      }
    }
  }
  return report;
}

void require_valid(const PopulationTable& pop, const StrataAssignment* strata) {
  const ValidationReport report = validate(pop, strata);
  if (!report.ok()) {
    const Finding& f = report.errors.front();
    throw Error(ErrorCode::InvalidArgument, f.code + ": " + f.message, f.ids);
  }
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  if (quoted) throw Error(ErrorCode::MalformedRow, "unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 6; prec < 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  return out + "\"";
}

}  // namespace

LoadedPopulation load_population(std::istream& in, const ColumnMapping& mapping) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  const auto header = split_csv_row(line);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (trim(header[c]) == name) return c;
    }
    throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found in header");
  };
  const std::size_t id_col = column(mapping.id);
  const std::size_t yhat_col = column(mapping.y_hat);
  const std::size_t y_col = column(mapping.y);
  const std::optional<std::size_t> arm_col =
      mapping.arm ? std::optional(column(*mapping.arm)) : std::nullopt;
  const std::optional<std::size_t> stratum_col =
      mapping.stratum ? std::optional(column(*mapping.stratum)) : std::nullopt;
  std::vector<std::size_t> feature_cols;
  for (const auto& f : mapping.features) feature_cols.push_back(column(f));

  std::vector<UnitRecord> units;
  std::vector<std::string> strata;
  std::set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::string where = "row " + std::to_string(row);
    std::vector<std::string> cells;
    try {
      cells = split_csv_row(line);
    } catch (const Error&) {
      throw Error(ErrorCode::MalformedRow, where + ": unterminated quote");
    }
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, where + ": expected " + std::to_string(header.size()) +
                                               " cells, found " + std::to_string(cells.size()));
    }
    UnitRecord u;
    u.id = trim(cells[id_col]);
    if (u.id.empty()) throw Error(ErrorCode::MalformedRow, where + ": empty id");
    if (!seen.insert(u.id).second) {
      throw Error(ErrorCode::DuplicateId, "DuplicateId(\"" + u.id + "\") at " + where, {u.id});
    }
    auto yhat = parse_double(cells[yhat_col]);
    if (!yhat) {
      throw Error(ErrorCode::NonNumericValue,
                  where + ": y_hat '" + cells[yhat_col] + "' is not numeric", {u.id});
    }
    u.y_hat = *yhat;
    if (!trim(cells[y_col]).empty()) {
      auto y = parse_double(cells[y_col]);
      if (!y) {
        throw Error(ErrorCode::NonNumericValue, where + ": y '" + cells[y_col] + "' is not numeric",
                    {u.id});
      }
      if (!(mapping.missing_y && *y == *mapping.missing_y)) u.y = *y;
    }
    if (arm_col) {
      const std::string a = trim(cells[*arm_col]);
      auto av = parse_double(a);
      if (!av || (*av != 0.0 && *av != 1.0)) {
        throw Error(ErrorCode::InvalidArm, where + ": arm '" + a + "' is not 0 or 1", {u.id});
      }
      u.arm = static_cast<int>(*av);
    }
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const std::string raw = trim(cells[feature_cols[f]]);
      if (auto v = parse_double(raw)) {
        u.features[mapping.features[f]] = *v;
      } else {
        u.features[mapping.features[f]] = raw;
      }
    }
    if (stratum_col) strata.push_back(trim(cells[*stratum_col]));
    units.push_back(std::move(u));
  }
  LoadedPopulation out{PopulationTable(std::move(units), arm_col ? ArmMode::two_arm : ArmMode::single_arm),
                       std::nullopt};
  if (stratum_col) out.stratum_labels = std::move(strata);
  return out;
}

LoadedPopulation load_population_file(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  return load_population(in, mapping);
}

void write_population(std::ostream& out, const PopulationTable& pop, const ColumnMapping& mapping,
                      const StrataAssignment* strata) {
  out << csv_escape(mapping.id);
  if (pop.mode() == ArmMode::two_arm) out << ',' << csv_escape(mapping.arm.value_or("arm"));
  out << ',' << csv_escape(mapping.y_hat) << ',' << csv_escape(mapping.y);
  if (strata) out << ',' << csv_escape(mapping.stratum.value_or("stratum"));
  for (const auto& f : mapping.features) out << ',' << csv_escape(f);
  out << '\n';
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const UnitRecord& u = pop.unit(i);
    out << csv_escape(u.id);
    if (pop.mode() == ArmMode::two_arm) out << ',' << *u.arm;
    out << ',' << format_double(u.y_hat) << ',';
    if (u.y) out << format_double(*u.y);
    if (strata) out << ',' << strata->label(i) + 1;
    for (const auto& f : mapping.features) {
      out << ',';
      auto it = u.features.find(f);
      if (it == u.features.end()) continue;
      if (const double* d = std::get_if<double>(&it->second)) out << format_double(*d);
      else out << csv_escape(std::get<std::string>(it->second));
    }
    out << '\n';
  }
}

std::map<std::string, double> residuals(const PopulationTable& pop, const SampleDraw& draw) {
  std::map<std::string, double> out;
  for (std::size_t i : draw.selected) {
    const UnitRecord& u = pop.unit(i);
    if (!u.y) {
      throw Error(ErrorCode::CodedUnitMissingY, "CodedUnitMissingY(" + u.id + ")", {u.id});
    }
    out.emplace(u.id, *u.y - u.y_hat);
  }
  return out;
}

}  // namespace stratma
