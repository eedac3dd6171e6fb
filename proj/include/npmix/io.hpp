#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "npmix/dfunction.hpp"
#include "npmix/model.hpp"
#include "npmix/npsa.hpp"
#include "npmix/osat.hpp"
#include "npmix/sa.hpp"
#include "npmix/types.hpp"

namespace npmix::io {

// Subjects plus the covariate columns the file carried, in file order.
struct Dataset {
  std::vector<Subject> subjects;
  std::vector<std::string> covariate_columns;
};

// Flat CSV dataset format. Mandatory header: id,time,out,dose,duration,route;
// every further column is a per-subject constant covariate. A row with a
// nonempty out is an observation, one with a nonempty dose is a dose event
// (duration 0 or empty = bolus); a dose and an observation at the same time
// go on separate rows and the dose applies first. Rows of one subject must be
// contiguous. Errors name the file, line and column.
Dataset load_dataset(const std::string& path);

// Inverse of load_dataset; load_dataset(write_dataset(x)) reproduces x.
void write_dataset(const std::string& path, const std::vector<Subject>& subjects,
                   std::span<const std::string> covariate_columns);

struct SyntheticResult {
  std::string data_path;
  std::string truth_path;
};

// Draws per-subject parameters from the documented generative mixtures for
// example "onecomp" (K from equal-weight N(0.5,0.05^2)/N(1.5,0.15^2), V from
// N(1.0,0.2^2)) or "twocomp" (K from N(0.5,0.06^2)/N(0.8,0.06^2), V from
// N(1.0,0.2^2), Kcp from N(0.5,0.2^2), Kpc from N(2.0,0.1^2)), simulates
// observations at t = 0.2..1.0 with additive N(0,0.5^2) noise, and writes
// <example>_data.csv plus <example>_truth.csv into out_dir. Each subject has
// its own seed substream, so a smaller n yields a prefix of a larger one.
SyntheticResult generate_synthetic(const std::string& example, int n, std::uint64_t seed,
                                   const std::string& out_dir);

// "lo:hi" -> range.
ParamRange parse_range(const std::string& text, const std::string& what);
// "lo:hi,lo:hi,..." -> ranges; a single range is replicated to expected_dim.
std::vector<ParamRange> parse_ranges(const std::string& text, int expected_dim,
                                     const std::string& what);

// Everything a fit run needs besides the data itself. workers and out_dir are
// execution details: they never enter saved results, so reruns of one config
// at any worker count produce identical bytes.
struct RunConfig {
  std::string model = "onecomp";
  std::string data;
  std::string mode = "npsa3";  // npsa2 | npsa3 | osat
  int num_points = 0;          // choice-2 support size; 0 means n
  std::vector<ParamRange> mu_bounds;
  std::vector<ParamRange> beta_bounds;  // anneal fixed effects when nonempty
  std::vector<double> fixed_beta;       // hold them fixed when nonempty
  std::optional<ParamRange> sigma_bounds;
  std::optional<double> fixed_sigma;
  SAConfig sa;
  bool compute_d = true;
  double prune_floor = 1e-5;
  double merge_radius = 1e-3;  // fraction of each coordinate's bound width
  int d_extra_seeds = 16;
  std::optional<double> d_t0;  // overrides for the diagnostic's inner schedule
  std::optional<double> d_rt;
  std::optional<int> d_ns;
  std::optional<int> d_nt;
  int workers = 1;
  std::string out_dir = "npmix-out";

  void validate(const ModelDescriptor& desc) const;  // throws std::invalid_argument
  FitOptions fit_options() const;                    // modes npsa2 / npsa3
  OsatOptions osat_options() const;                  // mode osat
  DPhiOptions dphi_options() const;
  std::vector<double> merge_radii() const;  // merge_radius * width, per coordinate
};

struct SavedResult {
  NPSAResult result;
  RunConfig config;
  std::optional<DPhiResult> diagnostic;
};

// JSON round trip of a completed fit: candidate, trace, diagnostic and the
// config echo, so dcheck and report reruns need no refit. Deliberately
// excludes wall time and worker count.
void save_result(const std::string& path, const NPSAResult& result, const RunConfig& config,
                 const DPhiResult* diagnostic);
SavedResult load_result(const std::string& path);

// Least-squares line obs ~ slope * pred + intercept, its R^2 and residual
// sum of squares.
struct FitStats {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double rss = 0.0;
  int count = 0;
};
FitStats regression_stats(std::span<const double> predicted, std::span<const double> observed);

// Writes the result bundle into out_dir: support_points.csv (raw and pruned
// variants, ascending), predictions.csv (population and individual),
// summary.txt (key=value), trace.csv, result.json, and timing.txt. Only
// timing.txt carries wall time and worker count; everything else is a pure
// function of (config, seed, dataset).
void write_report(const std::string& out_dir, const Model& model,
                  const std::vector<Subject>& subjects, const NPSAResult& result,
                  const RunConfig& config, const DPhiResult* diagnostic);

}  // namespace npmix::io
