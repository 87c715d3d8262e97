#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stratma {

struct PowerStratum {
  double N = 0.0;          // units in the stratum
  double resid_mean = 0.0;
  double resid_var = 0.0;  // S^2_k(e), divisor N_k - 1
};

struct PowerArm {
  std::vector<PowerStratum> strata;
  double y_var = 0.0;  // S^2_z(Y)

  double N() const;
};

struct PowerDesign {
  std::vector<PowerArm> arms;
  double alpha = 0.05;
  double power = 0.80;

  void check() const;
  double multiplier() const;  // z_{1 - alpha/2} + z_power
};

enum class PowerMethod { srs, stratified_proportional };

/// Residual term W_z for one arm. Stratified: sum_k (N_k/N) S^2_k. SRS:
/// sum_k (N_k/N) [S^2_k + (ebar_k - ebar)^2], the same decomposition taken
/// with population weights so that stratified <= SRS holds exactly.
double residual_term(const PowerArm& arm, PowerMethod method);

double standard_error(const PowerDesign& d, double h, PowerMethod method);

struct MdesPoint {
  double h = 0.0;
  double mdes_srs = 0.0;
  double mdes_stratified = 0.0;
};

std::vector<MdesPoint> mdes_curve(const PowerDesign& d, const std::vector<double>& h_grid);

/// "a:b:s" inclusive grid, or a comma list.
std::vector<double> parse_h_grid(const std::string& text);

/// CSV with columns arm, stratum, N, resid_mean, resid_var, y_var (y_var is
/// read from the first row of each arm).
PowerDesign read_power_design(std::istream& in);

void write_mdes_csv(std::ostream& out, const std::vector<MdesPoint>& curve);

}  // namespace stratma
