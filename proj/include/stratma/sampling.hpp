#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stratma/allocation.hpp"
#include "stratma/core.hpp"
#include "stratma/rng.hpp"

namespace stratma {

enum class Scheme { srs, stratified };

/// Units selected for gold-standard coding.
struct SampleDraw {
  std::vector<std::size_t> selected;     // unit positions, ascending
  std::vector<std::vector<int>> counts;  // realized n_zk ([arm][stratum]; one entry per arm for SRS)
  Scheme scheme = Scheme::srs;

  bool contains(std::size_t i) const;
  std::vector<std::string> ids(const PopulationTable& pop) const;
};

/// Simple random sample without replacement of n_z units inside each arm.
SampleDraw srs_sample(const PopulationTable& pop, std::span<const int> arm_budgets, Seed seed);

/// Independent SRS of alloc.n[z][k] units inside every (arm, stratum).
/// Stratum k of arm z draws from its own substream, so the result does not
/// depend on the order strata are processed in.
SampleDraw stratified_sample(const PopulationTable& pop, const StrataAssignment& strata,
                             const Allocation& alloc, Seed seed);

/// The draw implied by which units carry an observed y.
SampleDraw coded_draw(const PopulationTable& pop, const StrataAssignment* strata, Scheme scheme);

/// Audit export: one row per unit, `id,sampled` with sampled in {0,1}.
void write_draw(std::ostream& out, const PopulationTable& pop, const SampleDraw& draw);

/// Partial Fisher-Yates: first `take` entries of a uniformly shuffled copy.
std::vector<std::size_t> choose_without_replacement(std::vector<std::size_t> pool, std::size_t take,
                                                    Rng& rng);

}  // namespace stratma
