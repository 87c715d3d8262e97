#include "stratma/sampling.hpp"

#include <algorithm>
#include <ostream>

namespace stratma {

namespace {

constexpr std::uint64_t kSamplingDomain = 0x5A4D504C;  // "SMPL"

Rng stratum_stream(Seed seed, int arm, int stratum) {
  return Rng::substream(seed.master, {kSamplingDomain, seed.stream, static_cast<std::uint64_t>(arm),
                                      static_cast<std::uint64_t>(stratum)});
}

std::vector<std::size_t> sorted_by_id(const PopulationTable& pop, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return pop.unit(a).id < pop.unit(b).id; });
  return idx;
}

}  // namespace

bool SampleDraw::contains(std::size_t i) const {
  return std::binary_search(selected.begin(), selected.end(), i);
}

std::vector<std::string> SampleDraw::ids(const PopulationTable& pop) const {
  std::vector<std::string> out;
  out.reserve(selected.size());
  for (std::size_t i : selected) out.push_back(pop.unit(i).id);
  return out;
}

std::vector<std::size_t> choose_without_replacement(std::vector<std::size_t> pool, std::size_t take,
                                                    Rng& rng) {
  const std::size_t n = pool.size();
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

SampleDraw srs_sample(const PopulationTable& pop, std::span<const int> arm_budgets, Seed seed) {
  if (static_cast<int>(arm_budgets.size()) != pop.n_arms()) {
    throw Error(ErrorCode::InvalidArgument, "one budget per arm required");
  }
  SampleDraw draw;
  draw.scheme = Scheme::srs;
  for (int z = 0; z < pop.n_arms(); ++z) {
    const int n = arm_budgets[z];
    const auto N = static_cast<int>(pop.arm_size(z));
    if (n > N) {
      throw Error(ErrorCode::BudgetExceedsArm, "BudgetExceedsArm(" + std::to_string(z) + "): " +
                                                   std::to_string(n) + " > " + std::to_string(N));
    }
    if (n <= 0) throw Error(ErrorCode::InvalidArgument, "arm budgets must be positive");
    // Shares the stream of stratum 0 so a single-stratum design reproduces it exactly.
    Rng rng = stratum_stream(seed, z, 0);
    auto picked = choose_without_replacement(sorted_by_id(pop, pop.arm_members(z)),
                                             static_cast<std::size_t>(n), rng);
    draw.selected.insert(draw.selected.end(), picked.begin(), picked.end());
    draw.counts.push_back({n});
  }
  std::sort(draw.selected.begin(), draw.selected.end());
  return draw;
}

SampleDraw stratified_sample(const PopulationTable& pop, const StrataAssignment& strata,
                             const Allocation& alloc, Seed seed) {
  if (strata.labels().size() != pop.size()) {
    throw Error(ErrorCode::InvalidArgument, "strata do not cover the population");
  }
  if (alloc.n_arms() != strata.n_arms()) {
    throw Error(ErrorCode::InvalidArgument, "allocation and strata disagree on the number of arms");
  }
  SampleDraw draw;
  draw.scheme = Scheme::stratified;
  for (int z = 0; z < strata.n_arms(); ++z) {
    if (static_cast<int>(alloc.n[z].size()) != strata.n_strata(z)) {
      throw Error(ErrorCode::AllocationInfeasible,
                  "allocation for arm " + std::to_string(z) + " has the wrong number of strata");
    }
    draw.counts.emplace_back();
    for (int k = 0; k < strata.n_strata(z); ++k) {
      const int n = alloc.n[z][k];
      const int N = strata.counts(z)[k];
      if (n < 1 || n > N) {
        throw Error(ErrorCode::AllocationInfeasible,
                    "AllocationInfeasible(" + std::to_string(z) + ", " + std::to_string(k + 1) +
                        "): n=" + std::to_string(n) + " N=" + std::to_string(N));
      }
      Rng rng = stratum_stream(seed, z, k);
      auto picked = choose_without_replacement(strata.members(z, k), static_cast<std::size_t>(n), rng);
      draw.selected.insert(draw.selected.end(), picked.begin(), picked.end());
      draw.counts.back().push_back(n);
    }
  }
  std::sort(draw.selected.begin(), draw.selected.end());
  return draw;
}

SampleDraw coded_draw(const PopulationTable& pop, const StrataAssignment* strata, Scheme scheme) {
  SampleDraw draw;
  draw.scheme = scheme;
  for (int z = 0; z < pop.n_arms(); ++z) {
    draw.counts.emplace_back(strata && scheme == Scheme::stratified ? strata->n_strata(z) : 1, 0);
  }
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!pop.unit(i).y) continue;
    draw.selected.push_back(i);
    const int k = strata && scheme == Scheme::stratified ? strata->label(i) : 0;
    ++draw.counts[pop.arm_of(i)][k];
  }
  return draw;
}

void write_draw(std::ostream& out, const PopulationTable& pop, const SampleDraw& draw) {
  out << "id,sampled\n";
  for (std::size_t i = 0; i < pop.size(); ++i) {
    out << pop.unit(i).id << ',' << (draw.contains(i) ? 1 : 0) << '\n';
  }
}

}  // namespace stratma
