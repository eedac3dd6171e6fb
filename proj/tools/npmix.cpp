#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npmix/io.hpp"

namespace {

using namespace npmix;

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) {
        char* end = nullptr;
        const double v = std::strtod(cur.c_str(), &end);
        if (end != cur.c_str() + cur.size()) {
          throw std::invalid_argument(what + ": bad number '" + cur + "'");
        }
        out.push_back(v);
      }
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (out.empty()) throw std::invalid_argument(what + ": no values given");
  return out;
}

// Loads the dataset named by the config, rejecting covariate columns the
// model does not use (they are usually typos).
io::Dataset load_for(const io::RunConfig& cfg, const ModelDescriptor& desc,
                     const std::string& data_override) {
  io::Dataset ds = io::load_dataset(data_override.empty() ? cfg.data : data_override);
  for (const std::string& col : ds.covariate_columns) {
    if (std::find(desc.requirements.covariates.begin(), desc.requirements.covariates.end(),
                  col) == desc.requirements.covariates.end()) {
      throw std::invalid_argument("dataset column '" + col + "' is not used by model '" +
                                  desc.name + "'");
    }
  }
  validate_dataset(ds.subjects, desc.requirements);
  return ds;
}

struct FitArgs {
  io::RunConfig cfg;
  std::string mu_bounds;
  std::string beta_bounds;
  std::string sigma_bounds;
  std::string beta;
  double sigma = 0.0;
  double d_t0 = 0.0;
  double d_rt = 0.0;
  int d_ns = 0;
  int d_nt = 0;
  bool quiet = false;
};

void add_fit_options(CLI::App* cmd, FitArgs& a) {
  cmd->set_config("--config", "", "Key=value file; every key mirrors a flag name");
  cmd->add_option("--model", a.cfg.model, "Model: wang, onecomp, twocomp, voriconazole")
      ->required();
  cmd->add_option("--data", a.cfg.data, "Dataset CSV")->required();
  cmd->add_option("--mode", a.cfg.mode, "npsa2, npsa3 or osat")
      ->check(CLI::IsMember({"npsa2", "npsa3", "osat"}));
  cmd->add_option("--points", a.cfg.num_points, "Support size for npsa2 (default: subjects)");
  cmd->add_option("--mu-bounds", a.mu_bounds,
                  "Support search box, lo:hi per coordinate, comma separated; a single "
                  "range applies to all coordinates")
      ->required();
  cmd->add_option("--beta", a.beta, "Fixed-effect values (comma separated), held fixed");
  cmd->add_option("--beta-bounds", a.beta_bounds, "Fixed-effect search ranges, annealed");
  cmd->add_option("--sigma", a.sigma, "Error scale held fixed");
  cmd->add_option("--sigma-bounds", a.sigma_bounds, "Error-scale search range, annealed");
  cmd->add_option("--t0", a.cfg.sa.t0, "Initial temperature");
  cmd->add_option("--rt", a.cfg.sa.rt, "Cooling factor in (0,1)");
  cmd->add_option("--ns", a.cfg.sa.ns, "Sweeps per step adjustment");
  cmd->add_option("--nt", a.cfg.sa.nt, "Step adjustments per temperature cycle");
  cmd->add_option("--eps", a.cfg.sa.eps, "Stop tolerance on cycle-final energies");
  cmd->add_option("--neps", a.cfg.sa.n_eps, "Cycle finals that must agree to stop");
  cmd->add_option("--max-cycles", a.cfg.sa.max_cycles, "Cap on temperature cycles");
  cmd->add_option("--seed", a.cfg.sa.seed, "RNG seed");
  cmd->add_option("--workers", a.cfg.workers, "Worker threads")->envname("NPMIX_WORKERS");
  cmd->add_option("--out", a.cfg.out_dir, "Report directory");
  cmd->add_flag("--compute-d,!--no-compute-d", a.cfg.compute_d,
                "Run the optimality diagnostic after the fit (default on)");
  cmd->add_option("--prune-floor", a.cfg.prune_floor, "Weight below which points are dropped");
  cmd->add_option("--merge-radius", a.cfg.merge_radius,
                  "Merge radius as a fraction of each bound width");
  cmd->add_option("--d-extra-seeds", a.cfg.d_extra_seeds, "Extra diagnostic starting draws");
  cmd->add_option("--d-t0", a.d_t0, "Diagnostic inner temperature");
  cmd->add_option("--d-rt", a.d_rt, "Diagnostic cooling factor");
  cmd->add_option("--d-ns", a.d_ns, "Diagnostic sweeps per adjustment");
  cmd->add_option("--d-nt", a.d_nt, "Diagnostic adjustments per cycle");
  cmd->add_flag("--quiet", a.quiet, "Suppress per-cycle progress on stderr");
}

// Moves flag text into the typed config; needs the model descriptor for the
// expected dimensions.
void finish_config(CLI::App* cmd, FitArgs& a, const ModelDescriptor& desc) {
  a.cfg.mu_bounds = io::parse_ranges(a.mu_bounds, desc.mu_dim, "mu-bounds");
  if (cmd->count("--beta") > 0) a.cfg.fixed_beta = parse_doubles(a.beta, "beta");
  if (cmd->count("--beta-bounds") > 0) {
    a.cfg.beta_bounds = io::parse_ranges(a.beta_bounds, desc.beta_dim, "beta-bounds");
  }
  if (cmd->count("--sigma") > 0) a.cfg.fixed_sigma = a.sigma;
  if (cmd->count("--sigma-bounds") > 0) {
    a.cfg.sigma_bounds = io::parse_range(a.sigma_bounds, "sigma-bounds");
  }
  if (cmd->count("--d-t0") > 0) a.cfg.d_t0 = a.d_t0;
  if (cmd->count("--d-rt") > 0) a.cfg.d_rt = a.d_rt;
  if (cmd->count("--d-ns") > 0) a.cfg.d_ns = a.d_ns;
  if (cmd->count("--d-nt") > 0) a.cfg.d_nt = a.d_nt;
  a.cfg.validate(desc);
}

int run_fit(CLI::App* cmd, FitArgs& a) {
  const auto model = make_model(a.cfg.model);
  const ModelDescriptor& desc = model->descriptor();
  finish_config(cmd, a, desc);
  const io::Dataset ds = load_for(a.cfg, desc, "");

  NPSAResult result;
  if (a.cfg.mode == "osat") {
    if (!a.quiet) {
      std::fprintf(stderr, "fitting %zu subjects one at a time\n", ds.subjects.size());
    }
    result = fit_osat(*model, ds.subjects, a.cfg.osat_options());
  } else {
    FitOptions options = a.cfg.fit_options();
    if (!a.quiet) {
      options.on_cycle = [](const CycleRecord& c) {
        std::fprintf(stderr, "cycle %4d  T=%-10.4g  lnL=%-14.6f  best=%-14.6f  acc=%5.1f%%\n",
                     c.cycle, c.temperature, c.final_loglik, c.best_loglik,
                     100.0 * c.accept_rate);
      };
    }
    result = fit_npsa(*model, ds.subjects, options);
  }

  DPhiResult diag;
  const bool have_d = a.cfg.compute_d;
  if (have_d) {
    if (!a.quiet) std::fprintf(stderr, "running optimality diagnostic\n");
    diag = d_phi(*model, ds.subjects, result.best, a.cfg.dphi_options());
  }

  io::write_report(a.cfg.out_dir, *model, ds.subjects, result, a.cfg,
                   have_d ? &diag : nullptr);

  std::printf("loglik=%.17g\n", result.best_loglik);
  std::printf("cycles=%d\n", result.cycles);
  std::printf("converged=%s\n", result.converged ? "true" : "false");
  std::printf("model_evals=%llu\n", static_cast<unsigned long long>(result.eval_count));
  if (have_d) {
    std::printf("d_bound=%.17g\n", diag.bound);
    if (result.best_loglik != 0.0) {
      std::printf("d_over_loglik_pct=%.17g\n",
                  100.0 * diag.bound / std::abs(result.best_loglik));
    }
  }
  std::printf("report=%s\n", a.cfg.out_dir.c_str());
  return 0;
}

struct DcheckArgs {
  std::string result_path;
  std::string data_override;
  int extra_seeds = -1;
  int workers = 0;
};

int run_dcheck(DcheckArgs& a) {
  io::SavedResult saved = io::load_result(a.result_path);
  const auto model = make_model(saved.config.model);
  const io::Dataset ds = load_for(saved.config, model->descriptor(), a.data_override);
  DPhiOptions options = saved.config.dphi_options();
  if (a.extra_seeds >= 0) options.extra_seeds = a.extra_seeds;
  if (a.workers >= 1) options.workers = a.workers;
  const DPhiResult diag = d_phi(*model, ds.subjects, saved.result.best, options);

  std::printf("d_max=%.17g\n", diag.max_d);
  std::printf("d_bound=%.17g\n", diag.bound);
  if (saved.result.best_loglik != 0.0) {
    std::printf("d_over_loglik_pct=%.17g\n",
                100.0 * diag.bound / std::abs(saved.result.best_loglik));
  }
  std::string coords;
  for (double c : diag.argmax.coords) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", c);
    coords += coords.empty() ? buf : std::string(",") + buf;
  }
  std::printf("argmax=%s\n", coords.c_str());
  std::printf("d_evals=%llu\n", static_cast<unsigned long long>(diag.evals));
  std::printf("converged=%s\n", diag.converged ? "true" : "false");
  return 0;
}

struct SimulateArgs {
  std::string example = "onecomp";
  int n = 100;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int run_simulate(SimulateArgs& a) {
  const io::SyntheticResult files = io::generate_synthetic(a.example, a.n, a.seed, a.out_dir);
  std::printf("data=%s\n", files.data_path.c_str());
  std::printf("truth=%s\n", files.truth_path.c_str());
  return 0;
}

struct ReportArgs {
  std::string result_path;
  std::string data_override;
  std::string out_dir;
};

int run_report(ReportArgs& a) {
  io::SavedResult saved = io::load_result(a.result_path);
  const auto model = make_model(saved.config.model);
  const io::Dataset ds = load_for(saved.config, model->descriptor(), a.data_override);
  const std::string out = a.out_dir.empty() ? saved.config.out_dir : a.out_dir;
  io::write_report(out, *model, ds.subjects, saved.result, saved.config,
                   saved.diagnostic ? &*saved.diagnostic : nullptr);
  std::printf("report=%s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric mixing-distribution estimation by simulated annealing"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Fit a mixing distribution to a dataset");
  add_fit_options(fit, fit_args);

  DcheckArgs dcheck_args;
  CLI::App* dcheck = app.add_subcommand("dcheck", "Optimality diagnostic on a saved result");
  dcheck->add_option("--result", dcheck_args.result_path, "result.json from a fit")->required();
  dcheck->add_option("--data", dcheck_args.data_override, "Dataset override");
  dcheck->add_option("--extra-seeds", dcheck_args.extra_seeds, "Extra starting draws");
  dcheck->add_option("--workers", dcheck_args.workers, "Worker threads")
      ->envname("NPMIX_WORKERS");

  SimulateArgs sim_args;
  CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--example", sim_args.example, "onecomp or twocomp");
  simulate->add_option("--n", sim_args.n, "Number of subjects");
  simulate->add_option("--seed", sim_args.seed, "RNG seed");
  simulate->add_option("--out", sim_args.out_dir, "Output directory");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Re-render reports from a saved result");
  report->add_option("--result", report_args.result_path, "result.json from a fit")->required();
  report->add_option("--data", report_args.data_override, "Dataset override");
  report->add_option("--out", report_args.out_dir, "Report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return run_fit(fit, fit_args);
    if (dcheck->parsed()) return run_dcheck(dcheck_args);
    if (simulate->parsed()) return run_simulate(sim_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
