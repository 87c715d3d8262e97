#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "stratma/error.hpp"
#include "stratma/stats.hpp"

namespace stratma {

using FeatureValue = std::variant<double, std::string>;

struct UnitRecord {
  std::string id;
  std::optional<int> arm;  // absent in single-arm tables
  double y_hat = 0.0;      // surrogate score, outcome units
  std::optional<double> y; // gold-standard outcome, missing when uncoded
  std::map<std::string, FeatureValue> features;
};

enum class ArmMode { two_arm, single_arm };

/// Immutable collection of units. Construction enforces unique ids, finite
/// surrogates and arm values consistent with the mode; single-arm tables are
/// treated as arm 0 everywhere.
class PopulationTable {
 public:
  PopulationTable() = default;
  PopulationTable(std::vector<UnitRecord> units, ArmMode mode);

  const std::vector<UnitRecord>& units() const noexcept { return units_; }
  const UnitRecord& unit(std::size_t i) const { return units_.at(i); }
  std::size_t size() const noexcept { return units_.size(); }
  ArmMode mode() const noexcept { return mode_; }
  int n_arms() const noexcept { return mode_ == ArmMode::two_arm ? 2 : 1; }

  int arm_of(std::size_t i) const {
    return mode_ == ArmMode::two_arm ? *units_[i].arm : 0;
  }
  /// Unit positions belonging to arm z, in table order.
  const std::vector<std::size_t>& arm_members(int z) const { return members_.at(z); }
  std::size_t arm_size(int z) const { return members_.at(z).size(); }

  std::optional<std::size_t> find(const std::string& id) const;
  bool fully_coded() const;

  VectorXd y_hat() const;

 private:
  std::vector<UnitRecord> units_;
  ArmMode mode_ = ArmMode::single_arm;
  std::vector<std::vector<std::size_t>> members_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Stratum labels per unit, 0-based within the unit's arm, plus the implied
/// per-(arm, stratum) counts. Empty strata are representable so that
/// validate() can report them; estimators reject them.
class StrataAssignment {
 public:
  StrataAssignment() = default;
  StrataAssignment(const PopulationTable& pop, std::vector<int> labels);

  /// Single stratum per arm.
  static StrataAssignment trivial(const PopulationTable& pop);

  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int n_arms() const noexcept { return static_cast<int>(counts_.size()); }
  int n_strata(int z) const { return static_cast<int>(counts_.at(z).size()); }
  const std::vector<int>& counts(int z) const { return counts_.at(z); }
  /// Unit positions of stratum k in arm z, sorted by unit id.
  const std::vector<std::size_t>& members(int z, int k) const { return members_.at(z).at(k); }

 private:
  std::vector<int> labels_;
  std::vector<std::vector<int>> counts_;
  std::vector<std::vector<std::vector<std::size_t>>> members_;
};

/// Map arbitrary per-arm labels (strings) to dense 0-based indices ordered by
/// label value, numerically when every label parses as a number.
StrataAssignment strata_from_labels(const PopulationTable& pop,
                                    const std::vector<std::string>& raw_labels);

struct Finding {
  std::string code;
  std::string message;
  std::vector<std::string> ids;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<Finding> warnings;
  bool ok() const noexcept { return errors.empty(); }
};

ValidationReport validate(const PopulationTable& pop, const StrataAssignment* strata = nullptr);

/// Throws the first validation error, if any.
void require_valid(const PopulationTable& pop, const StrataAssignment* strata = nullptr);

struct ColumnMapping {
  std::string id = "id";
  std::optional<std::string> arm;  // absent -> single-arm table
  std::string y_hat = "y_hat";
  std::string y = "y";
  std::optional<std::string> stratum;
  std::vector<std::string> features;
  std::optional<double> missing_y;  // explicit sentinel read as an uncoded y
};

struct LoadedPopulation {
  PopulationTable table;
  std::optional<std::vector<std::string>> stratum_labels;  // raw column when mapped
};

/// Parse a header-led CSV. Empty y cells become missing values.
LoadedPopulation load_population(std::istream& in, const ColumnMapping& mapping);
LoadedPopulation load_population_file(const std::string& path, const ColumnMapping& mapping);

/// Write the table back as CSV using the mapping's column names.
void write_population(std::ostream& out, const PopulationTable& pop, const ColumnMapping& mapping,
                      const StrataAssignment* strata = nullptr);

struct SampleDraw;

/// e_i = y_i - y_hat_i for every coded unit of the draw, keyed by id.
std::map<std::string, double> residuals(const PopulationTable& pop, const SampleDraw& draw);

/// Minimal RFC-4180 style row splitter shared by the CSV readers.
std::vector<std::string> split_csv_row(const std::string& line);
std::string format_double(double v);

}  // namespace stratma
