#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "stratma/core.hpp"

namespace testing {

inline stratma::UnitRecord unit(std::string id, std::optional<int> arm, double y_hat,
                                std::optional<double> y) {
  stratma::UnitRecord u;
  u.id = std::move(id);
  u.arm = arm;
  u.y_hat = y_hat;
  u.y = y;
  return u;
}

inline stratma::PopulationTable single_arm(const std::vector<double>& y_hat,
                                           const std::vector<std::optional<double>>& y) {
  std::vector<stratma::UnitRecord> units;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    units.push_back(unit("u" + std::to_string(i + 1), std::nullopt, y_hat[i], y[i]));
  }
  return stratma::PopulationTable(std::move(units), stratma::ArmMode::single_arm);
}

inline stratma::LoadedPopulation parse(const std::string& csv, const stratma::ColumnMapping& m) {
  std::istringstream in(csv);
  return stratma::load_population(in, m);
}

}  // namespace testing
