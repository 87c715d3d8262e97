#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stratma/allocation.hpp"
#include "stratma/core.hpp"
#include "stratma/estimators.hpp"
#include "stratma/power.hpp"
#include "stratma/sampling.hpp"
#include "stratma/simulation.hpp"
#include "stratma/stratification.hpp"
#include "stratma/variance.hpp"

namespace stratma::cli {

namespace {

using nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rows of strings rendered as an aligned table, CSV or a JSON array.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render(const std::string& format) const {
    std::ostringstream os;
    if (format == "csv") {
      for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
      os << '\n';
      for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
        os << '\n';
      }
    } else if (format == "json") {
      ordered_json arr = ordered_json::array();
      for (const auto& r : rows) {
        ordered_json o;
        for (std::size_t c = 0; c < header.size(); ++c) o[header[c]] = r[c];
        arr.push_back(o);
      }
      os << arr.dump(2) << '\n';
    } else {
      std::vector<std::size_t> w(header.size());
      for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
      for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
      auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) {
          os << (c ? "  " : "") << std::setw(static_cast<int>(w[c])) << (c ? std::right : std::left) << r[c];
        }
        os << '\n';
      };
      line(header);
      for (const auto& r : rows) line(r);
    }
    return os.str();
  }
};

std::string num(double v) { return format_double(v); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << data;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int default_threads() {
  if (const char* env = std::getenv("STRATMA_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

// Column mapping flags shared by every subcommand that reads a population.
struct PopulationFlags {
  std::string input;
  std::string id_col = "id";
  std::string arm_col;
  std::string yhat_col = "y_hat";
  std::string y_col = "y";
  std::string stratum_col;
  std::vector<std::string> feature_cols;
  std::optional<double> missing_y;

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--input", input, "population CSV");
    if (required) o->required();
    app->add_option("--id-col", id_col, "unit id column");
    app->add_option("--arm-col", arm_col, "arm column (omit for a single-arm table)");
    app->add_option("--yhat-col", yhat_col, "surrogate score column");
    app->add_option("--y-col", y_col, "gold outcome column (blank cells = uncoded)");
    app->add_option("--stratum-col", stratum_col, "stratum label column");
    app->add_option("--feature-col", feature_cols, "feature column (repeatable)");
    app->add_option("--missing-y", missing_y, "numeric sentinel to read as an uncoded y");
  }

  LoadedPopulation load() const {
    ColumnMapping m;
    m.id = id_col;
    if (!arm_col.empty()) m.arm = arm_col;
    m.y_hat = yhat_col;
    m.y = y_col;
    if (!stratum_col.empty()) m.stratum = stratum_col;
    m.features = feature_cols;
    m.missing_y = missing_y;
    return load_population_file(input, m);
  }

  StrataAssignment strata(const LoadedPopulation& lp) const {
    if (!lp.stratum_labels) throw UsageError("--stratum-col is required here");
    return strata_from_labels(lp.table, *lp.stratum_labels);
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

AllocationMethod parse_allocation_method(const std::string& s) {
  if (s == "proportional") return AllocationMethod::proportional;
  if (s == "neyman") return AllocationMethod::neyman;
  throw UsageError("unknown allocation method '" + s + "'");
}

// Per-arm stratum sizes and residual SDs from coded units of a stratified table.
struct StratumSummary {
  std::vector<std::vector<int>> sizes;
  std::vector<std::vector<double>> sds;
  std::vector<int> arm_sizes;
};

StratumSummary summarize(const PopulationTable& pop, const StrataAssignment& strata, bool need_sds) {
  StratumSummary s;
  for (int z = 0; z < strata.n_arms(); ++z) {
    s.sizes.push_back(strata.counts(z));
    s.arm_sizes.push_back(static_cast<int>(pop.arm_size(z)));
    s.sds.emplace_back();
    for (int k = 0; k < strata.n_strata(z); ++k) {
      std::vector<double> e;
      for (std::size_t i : strata.members(z, k)) {
        if (pop.unit(i).y) e.push_back(*pop.unit(i).y - pop.unit(i).y_hat);
      }
      if (need_sds && e.size() < 2) {
        throw Error(ErrorCode::StratumTooSmallForVariance,
                    "arm " + std::to_string(z) + ", stratum " + std::to_string(k + 1) +
                        " has fewer than 2 coded units to estimate its residual SD");
      }
      s.sds.back().push_back(e.size() < 2 ? 0.0
                                          : std::sqrt(sample_variance(Eigen::Map<const VectorXd>(
                                                e.data(), static_cast<Eigen::Index>(e.size())))));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string format;
  std::string output;
  std::vector<std::string> inputs;
  std::vector<std::string> extra_outputs;
  std::optional<std::uint64_t> seed;
};

void emit(Context& ctx, const std::string& data) {
  if (ctx.output.empty()) ctx.out << data;
  else write_file(ctx.output, data);
}

std::string render_estimate(const EstimateReport& r, const std::string& format) {
  const std::string se = r.se ? num(*r.se) : "NA";
  const std::string lo = r.ci ? num(r.ci->first) : "NA";
  const std::string hi = r.ci ? num(r.ci->second) : "NA";
  if (format == "json") {
    ordered_json j;
    j["estimand"] = to_string(r.estimand);
    j["method"] = to_string(r.method);
    j["estimate"] = r.estimate;
    j["se"] = r.se ? ordered_json(*r.se) : ordered_json(nullptr);
    j["ci"] = r.ci ? ordered_json::array({r.ci->first, r.ci->second}) : ordered_json(nullptr);
    j["ci_level"] = r.ci_level;
    j["arm_values"] = r.arm_values;
    ordered_json comps = ordered_json::object();
    for (const auto& c : r.components) comps[c.name] = c.value;
    j["variance_components"] = comps;
    ordered_json strata = ordered_json::array();
    for (const auto& s : r.strata) {
      strata.push_back({{"arm", s.arm},
                        {"stratum", s.stratum + 1},
                        {"N", s.N},
                        {"n", s.n},
                        {"mean_residual", std::isnan(s.mean_residual) ? ordered_json(nullptr)
                                                                      : ordered_json(s.mean_residual)},
                        {"residual_variance", std::isnan(s.residual_variance)
                                                  ? ordered_json(nullptr)
                                                  : ordered_json(s.residual_variance)},
                        {"within_term", s.within_term}});
    }
    j["strata"] = strata;
    j["diagnostics"] = r.diagnostics;
    return j.dump(2) + "\n";
  }
  Table row{{"estimand", "method", "estimate", "se", "ci_lo", "ci_hi", "ci_level"},
            {{to_string(r.estimand), to_string(r.method), num(r.estimate), se, lo, hi, num(r.ci_level)}}};
  if (format == "csv") return row.render("csv");
  std::string s = row.render("table");
  if (!r.components.empty()) {
    Table comps{{"component", "value"}, {}};
    for (const auto& c : r.components) comps.rows.push_back({c.name, num(c.value)});
    s += "\n" + comps.render("table");
  }
  if (!r.strata.empty()) {
    Table st{{"arm", "stratum", "N", "n", "mean_residual", "residual_variance"}, {}};
    for (const auto& x : r.strata) {
      st.rows.push_back({std::to_string(x.arm), std::to_string(x.stratum + 1), std::to_string(x.N),
                         std::to_string(x.n), num(x.mean_residual), num(x.residual_variance)});
    }
    s += "\n" + st.render("table");
  }
  for (const auto& d : r.diagnostics) s += "note: " + d + "\n";
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surrogate-assisted design-based estimation with stratified coding samples", "stratma"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string format;
  std::string output;
  std::optional<std::uint64_t> seed;
  int threads = default_threads();

  // estimate
  auto* est = app.add_subcommand("estimate", "point estimate, SE and CI from a coded population");
  PopulationFlags est_pop;
  est_pop.add(est);
  std::string est_method = "ma-stratified", est_estimand, est_mode = "superpopulation";
  double ci = 0.95;
  est->add_option("--method", est_method, "oracle, subset, ma-srs or ma-stratified");
  est->add_option("--estimand", est_estimand, "ate or mean (must match the table)");
  est->add_option("--ci", ci, "confidence level");
  est->add_option("--variance-mode", est_mode, "finite_population or superpopulation")
      ->check(CLI::IsMember({"finite_population", "superpopulation"}));

  // allocate
  auto* alc = app.add_subcommand("allocate", "per-stratum coding quotas");
  PopulationFlags alc_pop;
  alc_pop.add(alc, false);
  std::string alc_summary, alc_budget, alc_method = "proportional", alc_draw_out;
  int min_floor = 2;
  bool alc_oracle = false;
  alc->add_option("--summary", alc_summary, "CSV with columns arm (optional), stratum, N, sd");
  alc->add_option("--budget", alc_budget, "per-arm count (40) or fraction (0.3N)")->required();
  alc->add_option("--method", alc_method, "proportional or neyman");
  alc->add_option("--min-floor", min_floor, "minimum units per stratum");
  alc->add_flag("--oracle", alc_oracle, "use every coded residual (retrospective) for Neyman SDs");
  alc->add_option("--draw-out", alc_draw_out, "also draw the stratified sample and write id,sampled here");

  // stratify
  auto* str = app.add_subcommand("stratify", "generate and rank candidate stratifications");
  PopulationFlags str_pop;
  str_pop.add(str);
  std::string str_vars = "y_hat", str_budget = "0.3N", str_report, str_alloc = "proportional";
  bool str_oracle = false;
  RankFilters filters;
  int min_cell = 2;
  str->add_option("--vars", str_vars, "comma-separated variables (y_hat or feature columns)");
  str->add_option("--budget", str_budget, "coding budget for oracle metrics");
  str->add_option("--report", str_report, "candidate report path (alias of --output)");
  str->add_flag("--oracle", str_oracle, "add retrospective BS/WS metrics (needs a fully coded table)");
  str->add_option("--oracle-method", str_alloc, "allocation for oracle metrics");
  str->add_option("--min-size", filters.min_stratum_size, "exclude candidates with a smaller stratum");
  str->add_option("--max-ratio", filters.max_balance_ratio, "exclude candidates with a larger size ratio");
  str->add_option("--min-cell", min_cell, "merge cells smaller than this");

  // simulate
  auto* sim = app.add_subcommand("simulate", "factorial simulation grid or fixed-corpus repeats");
  std::string sim_config, sim_budget = "0.3N";
  int repeats = 0;
  PopulationFlags sim_pop;
  sim_pop.add(sim, false);
  sim->add_option("--config", sim_config, "grid config (JSON, schema stratma.grid/v1)");
  sim->add_option("--repeats", repeats, "resample an ingested coded table this many times");
  sim->add_option("--budget", sim_budget, "coding budget for --repeats");

  // power
  auto* pow = app.add_subcommand("power", "MDES against the coding fraction");
  std::string design, hgrid = "0.05:0.95:0.05";
  double alpha = 0.05, target_power = 0.8;
  pow->add_option("--design", design, "CSV: arm, stratum, N, resid_mean, resid_var, y_var")->required();
  pow->add_option("--alpha", alpha);
  pow->add_option("--power", target_power);
  pow->add_option("--h-grid", hgrid, "start:stop:step or a comma list");

  // decompose
  auto* dec = app.add_subcommand("decompose", "BS/WS decomposition from an oracle-coded table");
  PopulationFlags dec_pop;
  dec_pop.add(dec);
  std::string dec_alloc, dec_budget, dec_method = "proportional";
  dec->add_option("--allocation", dec_alloc, "CSV with columns arm (optional), stratum, n");
  dec->add_option("--budget", dec_budget, "budget when no allocation file is given");
  dec->add_option("--method", dec_method, "allocation method with --budget");

  // replay
  auto* rep = app.add_subcommand("replay", "rerun the command recorded in a run manifest");
  std::string manifest_path;
  rep->add_option("manifest", manifest_path, "manifest JSON")->required();

  for (auto* sub : {est, alc, str, sim, pow, dec}) {
    sub->add_option("--seed", seed, "master seed for all randomness");
    sub->add_option("--threads", threads, "worker threads (default $STRATMA_THREADS or 1)");
  }
  for (auto* sub : {est, alc, str, sim, pow, dec}) {
    sub->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));
    sub->add_option("--output,-o", output, "write the data output here instead of stdout");
  }

  std::vector<std::string> argv_r(args.rbegin(), args.rend());
  try {
    app.parse(argv_r);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (format.empty()) format = (*est || *dec) ? "table" : "csv";

  Context ctx{out, err, format, output, {}, {}, seed};
  std::string subcommand;
  try {
    if (*rep) {
      const auto j = nlohmann::json::parse(read_file(manifest_path));
      std::vector<std::string> replay_args = j.at("args").get<std::vector<std::string>>();
      return run(replay_args, out, err);
    }
    if (*est) {
      subcommand = "estimate";
      ctx.inputs.push_back(est_pop.input);
      const auto lp = est_pop.load();
      const auto& pop = lp.table;
      if (!est_estimand.empty()) {
        if (est_estimand != "ate" && est_estimand != "mean") throw UsageError("--estimand must be ate or mean");
        const bool two = pop.mode() == ArmMode::two_arm;
        if ((est_estimand == "ate") != two) {
          throw Error(ErrorCode::ModeMismatch, "estimand '" + est_estimand + "' does not fit a " +
                                                   (two ? "two-arm" : "single-arm") + " table");
        }
      }
      const std::optional<StrataAssignment> strata =
          lp.stratum_labels ? std::optional(strata_from_labels(pop, *lp.stratum_labels)) : std::nullopt;
      const auto report = validate(pop, strata ? &*strata : nullptr);
      if (!report.ok()) {
        for (const auto& f : report.errors) err << "error: " << f.code << ": " << f.message << '\n';
        return 1;
      }
      for (const auto& f : report.warnings) err << "warning: " << f.code << ": " << f.message << '\n';
      EstimateOptions opt;
      opt.ci_level = ci;
      opt.mode = est_mode == "finite_population" ? VarianceMode::finite_population : VarianceMode::superpopulation;
      EstimateReport r;
      switch (parse_method(est_method)) {
        case Method::oracle: r = estimate_oracle(pop, opt); break;
        case Method::subset: r = estimate_subset(pop, coded_draw(pop, nullptr, Scheme::srs), opt); break;
        case Method::ma_srs: r = estimate_ma_srs(pop, coded_draw(pop, nullptr, Scheme::srs), opt); break;
        case Method::ma_stratified:
          if (!strata) throw UsageError("--method ma-stratified needs --stratum-col");
          r = estimate_ma_stratified(pop, *strata, coded_draw(pop, &*strata, Scheme::stratified), nullptr, opt);
          break;
      }
      emit(ctx, render_estimate(r, format));
    } else if (*alc) {
      subcommand = "allocate";
      const Budget budget = Budget::parse(alc_budget);
      const AllocationMethod method = parse_allocation_method(alc_method);
      StratumSummary s;
      std::vector<int> arm_ids;
      std::optional<LoadedPopulation> lp;
      std::optional<StrataAssignment> strata;
      if (!alc_summary.empty()) {
        if (!alc_draw_out.empty()) throw UsageError("--draw-out needs --input, not --summary");
        ctx.inputs.push_back(alc_summary);
        std::istringstream in(read_file(alc_summary));
        std::string line;
        std::getline(in, line);
        const auto header = split_csv_row(line);
        std::map<std::string, std::size_t> col;
        for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
        for (const char* need : {"stratum", "N"}) {
          if (!col.count(need)) throw Error(ErrorCode::MissingColumn, std::string("summary lacks '") + need + "'");
        }
        if (method == AllocationMethod::neyman && !col.count("sd")) {
          throw Error(ErrorCode::MissingColumn, "summary lacks 'sd' (needed for neyman)");
        }
        std::map<int, std::vector<std::pair<int, double>>> rows;
        int row = 1;
        while (std::getline(in, line)) {
          ++row;
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          const auto f = split_csv_row(line);
          if (f.size() != header.size()) throw Error(ErrorCode::MalformedRow, "summary row " + std::to_string(row));
          try {
            const int arm = col.count("arm") ? std::stoi(f[col["arm"]]) : 0;
            rows[arm].emplace_back(std::stoi(f[col["N"]]), col.count("sd") ? std::stod(f[col["sd"]]) : 0.0);
          } catch (const std::exception&) {
            throw Error(ErrorCode::NonNumericValue, "summary row " + std::to_string(row) + " is not numeric");
          }
        }
        for (const auto& [arm, strata_rows] : rows) {
          arm_ids.push_back(arm);
          s.sizes.emplace_back();
          s.sds.emplace_back();
          int total = 0;
          for (const auto& [N, sd] : strata_rows) {
            s.sizes.back().push_back(N);
            s.sds.back().push_back(sd);
            total += N;
          }
          s.arm_sizes.push_back(total);
        }
      } else {
        if (alc_pop.input.empty()) throw UsageError("allocate needs --summary or --input");
        ctx.inputs.push_back(alc_pop.input);
        lp = alc_pop.load();
        strata = alc_pop.strata(*lp);
        if (alc_oracle && !lp->table.fully_coded()) {
          throw Error(ErrorCode::UncodedUnit, "--oracle needs every unit coded");
        }
        s = summarize(lp->table, *strata, method == AllocationMethod::neyman);
        for (int z = 0; z < lp->table.n_arms(); ++z) arm_ids.push_back(z);
      }
      std::vector<int> budgets;
      for (int N : s.arm_sizes) budgets.push_back(budget.for_arm(N));
      const Allocation a = allocate(s.sizes, budgets, method, s.sds, min_floor);
      if (a.fell_back_to_proportional) err << "warning: AllZeroSD: fell back to proportional allocation\n";
      Table t{{"arm", "stratum", "N", "n"}, {}};
      for (std::size_t z = 0; z < a.n.size(); ++z) {
        for (std::size_t k = 0; k < a.n[z].size(); ++k) {
          t.rows.push_back({std::to_string(arm_ids[z]), std::to_string(k + 1), std::to_string(s.sizes[z][k]),
                            std::to_string(a.n[z][k])});
        }
      }
      emit(ctx, t.render(format));
      if (!alc_draw_out.empty()) {
        const SampleDraw d = stratified_sample(lp->table, *strata, a, {seed.value_or(0), 0});
        std::ostringstream os;
        write_draw(os, lp->table, d);
        write_file(alc_draw_out, os.str());
        ctx.extra_outputs.push_back(alc_draw_out);
      }
    } else if (*str) {
      subcommand = "stratify";
      if (!str_report.empty()) ctx.output = str_report;
      ctx.inputs.push_back(str_pop.input);
      const auto vars = split_list(str_vars);
      for (const auto& v : vars) {
        if (v != "y_hat" && std::find(str_pop.feature_cols.begin(), str_pop.feature_cols.end(), v) ==
                                str_pop.feature_cols.end()) {
          str_pop.feature_cols.push_back(v);
        }
      }
      const auto lp = str_pop.load();
      CandidateOptions copt;
      copt.min_cell_size = min_cell;
      const auto cands = generate_candidates(lp.table, vars, copt);
      std::vector<CandidateMetrics> metrics;
      const Budget budget = Budget::parse(str_budget);
      for (const auto& c : cands) {
        metrics.push_back(str_oracle ? oracle_metrics(lp.table, c.strata, budget, parse_allocation_method(str_alloc))
                                     : precoding_metrics(lp.table, c.strata));
      }
      const auto ranked = rank_candidates(cands, metrics, filters);
      for (const auto& d : ranked.diagnostics) err << "warning: " << d << '\n';
      Table t{{"rank", "name", "K", "var_of_stratum_means", "balance_ratio", "min_size", "status"}, {}};
      if (str_oracle) {
        for (const char* h : {"bs", "ws", "delta", "resid_var_ratio"}) t.header.push_back(h);
      }
      auto add = [&](std::size_t i, const std::string& rank, const std::string& status) {
        const auto& m = metrics[i];
        std::vector<std::string> r{rank, cands[i].name, std::to_string(cands[i].total_strata()),
                                   num(m.var_of_stratum_means), num(m.balance_ratio),
                                   std::to_string(m.min_stratum_size), status};
        if (m.oracle) {
          for (double v : {m.oracle->bs, m.oracle->ws, m.oracle->delta, m.oracle->residual_variance_ratio})
            r.push_back(num(v));
        }
        t.rows.push_back(std::move(r));
      };
      for (std::size_t j = 0; j < ranked.order.size(); ++j) add(ranked.order[j], std::to_string(j + 1), "ranked");
      for (const auto& [i, why] : ranked.excluded) add(i, "NA", "excluded: " + why);
      emit(ctx, t.render(format));
    } else if (*sim) {
      subcommand = "simulate";
      if (repeats > 0) {
        ctx.inputs.push_back(sim_pop.input);
        if (sim_pop.input.empty()) throw UsageError("--repeats needs --input");
        const auto lp = sim_pop.load();
        const auto strata = sim_pop.strata(lp);
        const auto r = resample_repeats(lp.table, strata, Budget::parse(sim_budget), repeats, seed.value_or(0));
        Table t{{"repeat"}, {}};
        for (const auto& e : r.estimators) t.header.push_back(e);
        for (int i = 0; i < repeats; ++i) {
          std::vector<std::string> row{std::to_string(i + 1)};
          for (const auto& e : r.estimates) row.push_back(num(e[i]));
          t.rows.push_back(std::move(row));
        }
        std::vector<std::string> last{"variance"};
        for (double v : r.empirical_variance) last.push_back(num(v));
        t.rows.push_back(std::move(last));
        emit(ctx, t.render(format));
      } else {
        if (sim_config.empty()) throw UsageError("simulate needs --config or --repeats");
        ctx.inputs.push_back(sim_config);
        GridConfig g = GridConfig::from_json(read_file(sim_config));
        if (seed) g.base.seed = *seed;
        ctx.seed = g.base.seed;
        const auto cells = run_grid(g, threads);
        std::ostringstream os;
        write_grid_csv(os, cells);
        if (format == "csv" || format == "table") {
          emit(ctx, os.str());
        } else {
          std::istringstream in(os.str());
          std::string line;
          std::getline(in, line);
          Table t{split_csv_row(line), {}};
          while (std::getline(in, line)) t.rows.push_back(split_csv_row(line));
          emit(ctx, t.render(format));
        }
        for (const auto& c : cells) {
          if (!c.error.empty()) err << "warning: scenario " << c.config.scenario_id << " failed: " << c.error << '\n';
        }
      }
    } else if (*pow) {
      subcommand = "power";
      ctx.inputs.push_back(design);
      std::istringstream in(read_file(design));
      PowerDesign d = read_power_design(in);
      d.alpha = alpha;
      d.power = target_power;
      const auto curve = mdes_curve(d, parse_h_grid(hgrid));
      Table t{{"h", "mdes_srs", "mdes_stratified"}, {}};
      for (const auto& p : curve) t.rows.push_back({num(p.h), num(p.mdes_srs), num(p.mdes_stratified)});
      emit(ctx, t.render(format));
    } else if (*dec) {
      subcommand = "decompose";
      ctx.inputs.push_back(dec_pop.input);
      const auto lp = dec_pop.load();
      const auto strata = dec_pop.strata(lp);
      Quotas n;
      if (!dec_alloc.empty()) {
        ctx.inputs.push_back(dec_alloc);
        std::istringstream in(read_file(dec_alloc));
        std::string line;
        std::getline(in, line);
        const auto header = split_csv_row(line);
        std::map<std::string, std::size_t> col;
        for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
        if (!col.count("stratum") || !col.count("n")) {
          throw Error(ErrorCode::MissingColumn, "allocation CSV needs columns stratum and n");
        }
        n.assign(strata.n_arms(), {});
        for (int z = 0; z < strata.n_arms(); ++z) n[z].assign(strata.n_strata(z), 0);
        while (std::getline(in, line)) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          const auto f = split_csv_row(line);
          const int z = col.count("arm") ? std::stoi(f[col["arm"]]) : 0;
          const int k = std::stoi(f[col["stratum"]]) - 1;
          if (z < 0 || z >= strata.n_arms() || k < 0 || k >= strata.n_strata(z)) {
            throw Error(ErrorCode::AllocationInfeasible, "allocation row refers to an unknown stratum");
          }
          n[z][k] = std::stoi(f[col["n"]]);
        }
      } else {
        if (dec_budget.empty()) throw UsageError("decompose needs --allocation or --budget");
        const auto method = parse_allocation_method(dec_method);
        const StratumSummary s = summarize(lp.table, strata, method == AllocationMethod::neyman);
        std::vector<int> budgets;
        for (int N : s.arm_sizes) budgets.push_back(Budget::parse(dec_budget).for_arm(N));
        n = allocate(s.sizes, budgets, method, s.sds).n;
      }
      const auto d = bs_ws_decomposition(lp.table, strata, n);
      Table t{{"arm", "bs", "ws", "delta"}, {}};
      for (std::size_t z = 0; z < d.bs_arm.size(); ++z) {
        t.rows.push_back({std::to_string(z), num(d.bs_arm[z]), num(d.ws_arm[z]), num(d.bs_arm[z] - d.ws_arm[z])});
      }
      t.rows.push_back({"total", num(d.bs), num(d.ws), num(d.delta)});
      emit(ctx, t.render(format));
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  if (!ctx.output.empty()) {
    ordered_json m;
    m["subcommand"] = subcommand;
    m["args"] = args;
    ordered_json config = ordered_json::object();
    for (const auto* sub : app.get_subcommands()) {
      for (const auto* opt : sub->get_options()) {
        if (opt->get_name() == "--help" || opt->count() == 0) continue;
        const auto res = opt->results();
        config[opt->get_name()] = res.size() == 1 ? ordered_json(res[0]) : ordered_json(res);
      }
    }
    m["config"] = config;
    m["seed"] = ctx.seed ? ordered_json(*ctx.seed) : ordered_json(nullptr);
    m["inputs"] = ctx.inputs;
    std::vector<std::string> outs{ctx.output};
    outs.insert(outs.end(), ctx.extra_outputs.begin(), ctx.extra_outputs.end());
    m["outputs"] = outs;
    m["tool_version"] = kToolVersion;
    m["timestamp"] = utc_now();
    try {
      write_file(ctx.output + ".manifest.json", m.dump(2) + "\n");
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}

}  // namespace stratma::cli
