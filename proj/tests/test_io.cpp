#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "npmix/io.hpp"
#include "npmix/model.hpp"
#include "npmix/npsa.hpp"
#include "npmix/rng.hpp"
#include "npmix/types.hpp"

using namespace npmix;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory under the build tree for one test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path("io_test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const fs::path& dir, const std::string& name,
                       const std::string& content) {
  const fs::path p = dir / name;
  std::ofstream f(p, std::ios::binary);
  f << content;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

constexpr const char* kHeader = "id,time,out,dose,duration,route\n";

Subject decay_subject(const std::string& id, double k, double v) {
  Subject s;
  s.id = id;
  s.times = {0.25, 0.5, 1.0};
  for (double t : s.times) s.observations.push_back((20.0 / v) * std::exp(-k * t));
  return s;
}

}  // namespace

TEST_CASE("load_dataset: rejects malformed files with located errors") {
  const fs::path dir = scratch("load_errors");

  CHECK_THROWS_WITH_AS(io::load_dataset((dir / "absent.csv").string()),
                       doctest::Contains("cannot open"), std::invalid_argument);

  const auto bad = [&](const char* name, const std::string& content,
                       const char* needle) {
    const std::string p = write_file(dir, name, content);
    CHECK_THROWS_WITH_AS(io::load_dataset(p), doctest::Contains(needle),
                         std::invalid_argument);
  };

  bad("short_header.csv", "id,time,out\n1,0,1,,,\n", "header must start with");
  bad("wrong_header.csv", "id,hour,out,dose,duration,route\n1,0,1,,,\n",
      "column 2 must be 'time'");
  bad("empty_cov.csv", "id,time,out,dose,duration,route,\n1,0,1,,,,2\n",
      "empty covariate column name");
  bad("dup_cov.csv", "id,time,out,dose,duration,route,wt,wt\n1,0,1,,,,2,2\n",
      "duplicate column 'wt'");
  bad("cell_count.csv", std::string(kHeader) + "1,0,1,,\n", "expected 6 columns, got 5");
  bad("empty_id.csv", std::string(kHeader) + ",0,1,,,\n", "empty id");
  bad("split.csv", std::string(kHeader) + "1,0,1,,,\n2,0,1,,,\n1,1,2,,,\n",
      "rows for subject '1' are not contiguous");
  bad("cov_drift.csv",
      "id,time,out,dose,duration,route,wt\n1,0,1,,,,70\n1,1,2,,,,71\n",
      "covariate 'wt' changes within subject '1'");
  bad("orphan_duration.csv", std::string(kHeader) + "1,0,1,,2.5,\n",
      "duration/route given without a dose");
  bad("empty_row.csv", std::string(kHeader) + "1,0,,,,\n",
      "neither an observation nor a dose");
  bad("no_rows.csv", kHeader, "no subjects");
  bad("bad_number.csv", std::string(kHeader) + "1,zero,1,,,\n", "bad number 'zero'");
  bad("bad_number_line.csv", std::string(kHeader) + "1,0,1,,,\n1,oops,2,,,\n",
      "bad_number_line.csv:3, column time");
}

TEST_CASE("load_dataset: doses, covariates, and forgiving formatting") {
  const fs::path dir = scratch("load_ok");
  // Mixed quirks on purpose: CRLF endings, a blank line, uppercase header,
  // a dose and an observation sharing one time on separate rows.
  const std::string p = write_file(
      dir, "data.csv",
      "ID,Time,OUT,Dose,Duration,Route,wt\r\n"
      "1,0,,10,2,iv,70\r\n"
      "1,0,1.5,,,,70\r\n"
      "\r\n"
      "1,1,0.8,,,,70\r\n"
      "2,0.5,2.25,,,,80\r\n"
      "2,1,,5,,oral,80\r\n");
  const io::Dataset ds = io::load_dataset(p);
  REQUIRE(ds.subjects.size() == 2);
  CHECK(ds.covariate_columns == std::vector<std::string>{"wt"});

  const Subject& a = ds.subjects[0];
  CHECK(a.id == "1");
  CHECK(a.times == std::vector<double>{0.0, 1.0});
  CHECK(a.observations == std::vector<double>{1.5, 0.8});
  REQUIRE(a.doses.size() == 1);
  CHECK(a.doses[0].time == 0.0);
  CHECK(a.doses[0].amount == 10.0);
  CHECK(a.doses[0].duration == 2.0);
  CHECK(a.doses[0].route == "iv");
  CHECK(a.covariate("wt") == 70.0);

  const Subject& b = ds.subjects[1];
  CHECK(b.times == std::vector<double>{0.5});
  REQUIRE(b.doses.size() == 1);
  CHECK(b.doses[0].duration == 0.0);  // empty duration reads as a bolus
  CHECK(b.doses[0].route == "oral");
}

TEST_CASE("write_dataset then load_dataset is the identity") {
  const fs::path dir = scratch("round_trip");
  std::vector<Subject> subjects;

  Subject s1;
  s1.id = "alpha";
  s1.times = {0.0, 0.5, 2.0};
  s1.observations = {1.25, 0.875, 0.3141592653589793};
  s1.doses = {{0.0, 12.5, 1.5, "iv"}, {2.0, 3.0, 0.0, "oral"}};  // tie at t = 2
  s1.covariates = {{"wt", 71.5}, {"age", 34.0}};
  subjects.push_back(s1);

  Subject s2;
  s2.id = "beta";
  s2.times = {1.0};
  s2.observations = {2.0 / 3.0};
  s2.covariates = {{"wt", 80.25}, {"age", 59.0}};
  subjects.push_back(s2);

  const std::vector<std::string> cols = {"wt", "age"};
  const std::string p = (dir / "round.csv").string();
  io::write_dataset(p, subjects, cols);
  const io::Dataset ds = io::load_dataset(p);

  CHECK(ds.covariate_columns == cols);
  REQUIRE(ds.subjects.size() == subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const Subject& want = subjects[i];
    const Subject& got = ds.subjects[i];
    CHECK(got.id == want.id);
    CHECK(got.times == want.times);
    CHECK(got.observations == want.observations);
    CHECK(got.covariates == want.covariates);
    REQUIRE(got.doses.size() == want.doses.size());
    for (std::size_t d = 0; d < want.doses.size(); ++d) {
      CHECK(got.doses[d].time == want.doses[d].time);
      CHECK(got.doses[d].amount == want.doses[d].amount);
      CHECK(got.doses[d].duration == want.doses[d].duration);
      CHECK(got.doses[d].route == want.doses[d].route);
    }
  }

  // A second write of the loaded data reproduces the file byte for byte.
  const std::string p2 = (dir / "round2.csv").string();
  io::write_dataset(p2, ds.subjects, ds.covariate_columns);
  CHECK(slurp(p2) == slurp(p));
}

TEST_CASE("generate_synthetic: deterministic, prefix-stable, documented shape") {
  const fs::path dir = scratch("synth");

  const io::SyntheticResult a = io::generate_synthetic("onecomp", 9, 42, (dir / "a").string());
  const io::SyntheticResult b = io::generate_synthetic("onecomp", 9, 42, (dir / "b").string());
  CHECK(slurp(a.data_path) == slurp(b.data_path));
  CHECK(slurp(a.truth_path) == slurp(b.truth_path));

  // Per-subject substreams: a smaller panel is a byte prefix of a larger one.
  const io::SyntheticResult small =
      io::generate_synthetic("onecomp", 4, 42, (dir / "small").string());
  const std::string big_data = slurp(a.data_path);
  const std::string small_data = slurp(small.data_path);
  CHECK(big_data.substr(0, small_data.size()) == small_data);
  const std::string big_truth = slurp(a.truth_path);
  const std::string small_truth = slurp(small.truth_path);
  CHECK(big_truth.substr(0, small_truth.size()) == small_truth);

  // A different seed changes the data.
  const io::SyntheticResult other =
      io::generate_synthetic("onecomp", 9, 43, (dir / "c").string());
  CHECK(slurp(other.data_path) != big_data);

  const io::Dataset ds = io::load_dataset(a.data_path);
  REQUIRE(ds.subjects.size() == 9);
  CHECK(ds.covariate_columns.empty());
  for (const Subject& s : ds.subjects) {
    CHECK(s.times == std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0});
    CHECK(s.observations.size() == 5);
    CHECK(s.doses.empty());
  }
  CHECK(ds.subjects[0].id == "1");
  CHECK(ds.subjects[8].id == "9");

  // Truth file: one labeled row per subject.
  std::istringstream truth(big_truth);
  std::string line;
  std::getline(truth, line);
  CHECK(line == "id,K,V");
  int rows = 0;
  while (std::getline(truth, line)) ++rows;
  CHECK(rows == 9);

  const io::SyntheticResult two =
      io::generate_synthetic("twocomp", 3, 1, (dir / "two").string());
  std::istringstream twos(slurp(two.truth_path));
  std::getline(twos, line);
  CHECK(line == "id,K,V,Kcp,Kpc");

  CHECK_THROWS_WITH_AS(io::generate_synthetic("onecomp", 0, 1, (dir / "z").string()),
                       doctest::Contains("at least 1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(io::generate_synthetic("vanishing", 3, 1, (dir / "z").string()),
                       doctest::Contains("unknown example"), std::invalid_argument);
}

TEST_CASE("generate_synthetic: draws follow the generative recipe") {
  const fs::path dir = scratch("synth_stats");
  const int n = 20000;
  const io::SyntheticResult out =
      io::generate_synthetic("onecomp", n, 7, (dir / "big").string());

  std::ifstream truth(out.truth_path);
  std::string line;
  std::getline(truth, line);  // header
  double sum_k = 0.0, sum_v = 0.0;
  int low = 0, rows = 0;
  while (std::getline(truth, line)) {
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 + 1);
    const double k = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const double v = std::stod(line.substr(c2 + 1));
    CHECK(k > 0.05);
    CHECK(v > 0.05);
    sum_k += k;
    sum_v += v;
    if (k < 1.0) ++low;
    ++rows;
  }
  REQUIRE(rows == n);
  // K is an equal mixture of N(0.5, 0.05^2) and N(1.5, 0.15^2); V is
  // N(1.0, 0.2^2). Tolerances sit beyond five standard errors.
  CHECK(std::abs(sum_k / n - 1.0) < 0.02);
  CHECK(std::abs(sum_v / n - 1.0) < 0.01);
  const double frac_low = static_cast<double>(low) / n;
  CHECK(frac_low > 0.47);
  CHECK(frac_low < 0.53);
}

TEST_CASE("parse_range and parse_ranges") {
  const ParamRange r = io::parse_range("0.2:2", "mu");
  CHECK(r.lower == 0.2);
  CHECK(r.upper == 2.0);
  CHECK_THROWS_WITH_AS(io::parse_range("0.2", "mu"), doctest::Contains("expected 'lo:hi'"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(io::parse_range("2:1", "mu"), doctest::Contains("upper must exceed"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(io::parse_range("a:b", "mu"), doctest::Contains("bad number"),
                       std::invalid_argument);

  const std::vector<ParamRange> two = io::parse_ranges("0:1, 2:3", 2, "mu");
  REQUIRE(two.size() == 2);
  CHECK(two[1].lower == 2.0);
  // One range replicates to the expected dimension.
  const std::vector<ParamRange> rep = io::parse_ranges("-10:10", 3, "mu");
  REQUIRE(rep.size() == 3);
  CHECK(rep[2].upper == 10.0);
  CHECK_THROWS_WITH_AS(io::parse_ranges("0:1,2:3", 3, "mu"),
                       doctest::Contains("expected 3 ranges, got 2"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(io::parse_ranges(" , ", 1, "mu"), doctest::Contains("no ranges"),
                       std::invalid_argument);
}

TEST_CASE("RunConfig: validation matrix") {
  auto onecomp = make_model("onecomp");
  auto wang = make_model("wang");
  const ModelDescriptor& od = onecomp->descriptor();
  const ModelDescriptor& wd = wang->descriptor();

  io::RunConfig base;
  base.model = "onecomp";
  base.mode = "npsa3";
  base.mu_bounds = {{0.2, 2.0}, {0.5, 2.0}};
  base.fixed_sigma = 0.5;
  CHECK_NOTHROW(base.validate(od));

  const auto bad = [&](const ModelDescriptor& desc, auto mutate, const char* needle) {
    io::RunConfig c = base;
    mutate(c);
    CHECK_THROWS_WITH_AS(c.validate(desc), doctest::Contains(needle), std::invalid_argument);
  };

  bad(od, [](io::RunConfig& c) { c.mode = "anneal"; }, "mode must be npsa2, npsa3 or osat");
  bad(od, [](io::RunConfig& c) { c.workers = 0; }, "workers must be at least 1");
  bad(od, [](io::RunConfig& c) { c.num_points = -1; }, "points must be >= 0");
  bad(od, [](io::RunConfig& c) { c.num_points = 30; }, "only meaningful for mode npsa2");
  bad(od, [](io::RunConfig& c) { c.mu_bounds.pop_back(); }, "needs 2 support bounds, got 1");
  bad(od, [](io::RunConfig& c) { c.mu_bounds[0] = {2.0, 0.2}; }, "upper must exceed lower");
  bad(od, [](io::RunConfig& c) { c.fixed_beta = {1.0}; }, "has no fixed effects");
  bad(od, [](io::RunConfig& c) { c.fixed_sigma.reset(); },
      "exactly one of sigma bounds or fixed sigma");
  bad(od, [](io::RunConfig& c) { c.sigma_bounds = ParamRange{0.1, 1.0}; },
      "exactly one of sigma bounds or fixed sigma");
  bad(od, [](io::RunConfig& c) { c.fixed_sigma = -0.5; }, "sigma must be positive");
  bad(od,
      [](io::RunConfig& c) {
        c.fixed_sigma.reset();
        c.sigma_bounds = ParamRange{0.0, 1.0};
      },
      "sigma bounds need 0 < lower < upper");
  bad(od, [](io::RunConfig& c) { c.prune_floor = 1.0; }, "prune floor must lie in [0, 1)");
  bad(od, [](io::RunConfig& c) { c.merge_radius = -0.1; }, "merge radius must be >= 0");
  bad(od, [](io::RunConfig& c) { c.d_extra_seeds = -1; }, "d-extra-seeds must be >= 0");

  io::RunConfig w;
  w.model = "wang";
  w.mode = "npsa3";
  w.mu_bounds = {{-10.0, 10.0}};
  w.fixed_beta = {0.97};
  CHECK_NOTHROW(w.validate(wd));
  w.beta_bounds = {{-10.0, 10.0}};
  CHECK_THROWS_WITH_AS(w.validate(wd), doctest::Contains("exactly one of beta bounds"),
                       std::invalid_argument);
  w.fixed_beta.clear();
  CHECK_NOTHROW(w.validate(wd));
  w.mode = "osat";
  CHECK_THROWS_WITH_AS(w.validate(wd),
                       doctest::Contains("osat needs fixed effects held at fixed values"),
                       std::invalid_argument);
  w.mode = "npsa3";
  w.beta_bounds = {{-10.0, 10.0}, {0.0, 1.0}};
  CHECK_THROWS_WITH_AS(w.validate(wd), doctest::Contains("has 1 fixed effects, got 2"),
                       std::invalid_argument);
  w.beta_bounds = {{-10.0, 10.0}};
  w.fixed_sigma = 0.5;
  CHECK_THROWS_WITH_AS(w.validate(wd), doctest::Contains("has no fitted error scale"),
                       std::invalid_argument);
}

TEST_CASE("RunConfig: option projections") {
  io::RunConfig c;
  c.model = "onecomp";
  c.mode = "npsa2";
  c.num_points = 12;
  c.mu_bounds = {{0.0, 2.0}, {1.0, 5.0}};
  c.fixed_sigma = 0.5;
  c.workers = 4;
  c.sa.seed = 99;
  c.merge_radius = 0.1;

  const FitOptions f = c.fit_options();
  CHECK(f.choice == 2);
  CHECK(f.num_points == 12);
  CHECK(f.fixed_sigma == 0.5);
  CHECK(f.workers == 4);
  CHECK(f.sa.seed == 99);
  CHECK(f.bounds.mu.size() == 2);
  CHECK_FALSE(f.bounds.sigma.has_value());

  c.mode = "npsa3";
  c.num_points = 0;
  CHECK(c.fit_options().choice == 3);

  // Sigma bounds turn the per-subject mode's consensus extension on.
  io::RunConfig o = c;
  o.mode = "osat";
  o.fixed_sigma.reset();
  o.sigma_bounds = ParamRange{0.1, 2.0};
  const OsatOptions oo = o.osat_options();
  CHECK(oo.consensus_sigma);
  REQUIRE(oo.sigma_bounds.has_value());
  CHECK(oo.sigma_bounds->upper == 2.0);
  CHECK(oo.mu_bounds.size() == 2);
  const OsatOptions fixed = c.osat_options();
  CHECK_FALSE(fixed.consensus_sigma);
  CHECK(fixed.fixed_sigma == 0.5);

  // The diagnostic keeps its own cheap schedule unless overridden.
  const DPhiOptions d0 = c.dphi_options();
  CHECK(d0.sa.t0 == 5.0);
  CHECK(d0.sa.rt == 0.7);
  CHECK(d0.sa.nt == 5);
  CHECK(d0.sa.max_cycles == 200);
  CHECK(d0.sa.seed == 99);
  CHECK(d0.extra_seeds == 16);
  c.d_t0 = 2.5;
  c.d_ns = 7;
  const DPhiOptions d1 = c.dphi_options();
  CHECK(d1.sa.t0 == 2.5);
  CHECK(d1.sa.ns == 7);
  CHECK(d1.sa.rt == 0.7);

  const std::vector<double> radii = c.merge_radii();
  REQUIRE(radii.size() == 2);
  CHECK(radii[0] == 0.1 * 2.0);
  CHECK(radii[1] == 0.1 * 4.0);
}

TEST_CASE("save_result and load_result round trip a finished fit") {
  const fs::path dir = scratch("result_json");
  auto model = make_model("onecomp");
  std::vector<Subject> subjects;
  for (int i = 0; i < 3; ++i) {
    Rng rng = Rng::substream(550, static_cast<std::uint64_t>(i));
    Subject s = decay_subject("s" + std::to_string(i + 1), rng.uniform(0.4, 1.6),
                              rng.uniform(0.8, 1.2));
    for (double& y : s.observations) y += rng.normal(0.0, 0.3);
    subjects.push_back(std::move(s));
  }

  io::RunConfig cfg;
  cfg.model = "onecomp";
  cfg.data = "panel.csv";
  cfg.mode = "npsa3";
  cfg.mu_bounds = {{0.2, 2.0}, {0.5, 2.0}};
  cfg.fixed_sigma = 0.5;
  cfg.sa.seed = 404;
  cfg.sa.max_cycles = 4;
  cfg.sa.eps = 1e-13;
  cfg.d_t0 = 3.0;
  cfg.workers = 2;          // execution detail: must not survive the round trip
  cfg.out_dir = "somewhere";

  const NPSAResult fit = fit_npsa(*model, subjects, cfg.fit_options());
  DPhiOptions dopt = cfg.dphi_options();
  const DPhiResult diag = d_phi(*model, subjects, fit.best, dopt);

  const std::string path = (dir / "result.json").string();
  io::save_result(path, fit, cfg, &diag);
  const io::SavedResult loaded = io::load_result(path);

  const NPSAResult& r = loaded.result;
  CHECK(r.n == fit.n);
  CHECK(r.num_points == fit.num_points);
  CHECK(r.best_loglik == fit.best_loglik);
  CHECK(r.best_energy == fit.best_energy);
  CHECK(r.cycles == fit.cycles);
  CHECK(r.converged == fit.converged);
  CHECK(r.eval_count == fit.eval_count);
  CHECK(r.wall_seconds == 0.0);  // deliberately not persisted
  CHECK(r.best.beta == fit.best.beta);
  CHECK(r.best.sigma == fit.best.sigma);
  REQUIRE(r.best.distribution.points.size() == fit.best.distribution.points.size());
  for (std::size_t k = 0; k < fit.best.distribution.points.size(); ++k) {
    CHECK(r.best.distribution.points[k].coords == fit.best.distribution.points[k].coords);
  }
  CHECK(r.best.distribution.weights == fit.best.distribution.weights);
  REQUIRE(r.trace.size() == fit.trace.size());
  for (std::size_t c = 0; c < fit.trace.size(); ++c) {
    CHECK(r.trace[c].cycle == fit.trace[c].cycle);
    CHECK(r.trace[c].temperature == fit.trace[c].temperature);
    CHECK(r.trace[c].final_energy == fit.trace[c].final_energy);
    CHECK(r.trace[c].best_energy == fit.trace[c].best_energy);
    CHECK(r.trace[c].final_loglik == fit.trace[c].final_loglik);
    CHECK(r.trace[c].best_loglik == fit.trace[c].best_loglik);
    CHECK(r.trace[c].evals == fit.trace[c].evals);
    CHECK(r.trace[c].accept_rate == fit.trace[c].accept_rate);
  }
  REQUIRE(loaded.diagnostic.has_value());
  CHECK(loaded.diagnostic->max_d == diag.max_d);
  CHECK(loaded.diagnostic->bound == diag.bound);
  CHECK(loaded.diagnostic->argmax.coords == diag.argmax.coords);
  CHECK(loaded.diagnostic->evals == diag.evals);
  CHECK(loaded.diagnostic->cycles == diag.cycles);
  CHECK(loaded.diagnostic->converged == diag.converged);

  const io::RunConfig& lc = loaded.config;
  CHECK(lc.model == "onecomp");
  CHECK(lc.data == "panel.csv");
  CHECK(lc.mode == "npsa3");
  CHECK(lc.mu_bounds.size() == 2);
  CHECK(lc.mu_bounds[1].upper == 2.0);
  CHECK(lc.fixed_sigma == 0.5);
  CHECK_FALSE(lc.sigma_bounds.has_value());
  CHECK(lc.sa.seed == 404);
  CHECK(lc.sa.eps == 1e-13);
  CHECK(lc.d_t0 == 3.0);
  CHECK_FALSE(lc.d_rt.has_value());
  CHECK(lc.workers == 1);             // back at the default
  CHECK(lc.out_dir == "npmix-out");   // back at the default

  // Saving the loaded copy reproduces the file byte for byte.
  const std::string path2 = (dir / "again.json").string();
  io::save_result(path2, loaded.result, loaded.config,
                  loaded.diagnostic ? &*loaded.diagnostic : nullptr);
  io::RunConfig cfg_clean = cfg;
  cfg_clean.workers = 1;
  cfg_clean.out_dir = "npmix-out";
  const std::string path3 = (dir / "clean.json").string();
  io::save_result(path3, fit, cfg_clean, &diag);
  CHECK(slurp(path2) == slurp(path3));
}

TEST_CASE("load_result: missing and malformed files") {
  const fs::path dir = scratch("result_errors");
  CHECK_THROWS_WITH_AS(io::load_result((dir / "gone.json").string()),
                       doctest::Contains("cannot open"), std::invalid_argument);
  const std::string junk = write_file(dir, "junk.json", "this is not json");
  CHECK_THROWS_WITH_AS(io::load_result(junk), doctest::Contains("junk.json"),
                       std::invalid_argument);
  const std::string partial = write_file(dir, "partial.json", "{\"n\": 3}");
  CHECK_THROWS_AS(io::load_result(partial), std::invalid_argument);
}

TEST_CASE("save_result: a model without an error scale keeps sigma as NaN") {
  const fs::path dir = scratch("nan_sigma");
  NPSAResult r;
  r.n = 1;
  r.num_points = 1;
  r.best.distribution.points = {{{0.5}}};
  r.best.distribution.weights = {1.0};
  // Candidate.sigma defaults to NaN; JSON stores it as null.
  io::RunConfig cfg;
  cfg.model = "wang";
  cfg.mu_bounds = {{-10.0, 10.0}};
  cfg.fixed_beta = {0.97};
  const std::string path = (dir / "r.json").string();
  io::save_result(path, r, cfg, nullptr);
  const io::SavedResult loaded = io::load_result(path);
  CHECK(std::isnan(loaded.result.best.sigma));
  CHECK_FALSE(loaded.diagnostic.has_value());
  CHECK(loaded.config.fixed_beta == std::vector<double>{0.97});
}

TEST_CASE("regression_stats: exact lines and a hand example") {
  std::vector<double> pred, obs;
  for (int i = 0; i < 7; ++i) {
    pred.push_back(0.5 * i);
    obs.push_back(2.0 * (0.5 * i) + 1.0);
  }
  const io::FitStats exact = io::regression_stats(pred, obs);
  CHECK(exact.count == 7);
  CHECK(exact.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(exact.intercept == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact.rss <= 1e-18);

  // pred {0,1,2}, obs {0,1,1}: slope 1/2, intercept 1/6, rss 1/6, R^2 3/4.
  const std::vector<double> p3 = {0.0, 1.0, 2.0};
  const std::vector<double> o3 = {0.0, 1.0, 1.0};
  const io::FitStats st = io::regression_stats(p3, o3);
  CHECK(st.slope == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(st.intercept == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(st.rss == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(st.r2 == doctest::Approx(0.75).epsilon(1e-12));

  const io::FitStats empty = io::regression_stats({}, {});
  CHECK(empty.count == 0);
  CHECK(empty.slope == 0.0);

  const std::vector<double> one = {1.0};
  CHECK_THROWS_WITH_AS(io::regression_stats(one, p3), doctest::Contains("length mismatch"),
                       std::invalid_argument);
}

TEST_CASE("write_report: complete bundle for a one-subject fit") {
  const fs::path dir = scratch("report");
  auto model = make_model("onecomp");
  Rng noise(300);
  Subject s = decay_subject("s1", 0.9, 1.2);
  for (double& y : s.observations) y += noise.normal(0.0, 0.2);
  const std::vector<Subject> subjects = {s};

  io::RunConfig cfg;
  cfg.model = "onecomp";
  cfg.mode = "npsa3";
  cfg.mu_bounds = {{0.2, 2.0}, {0.5, 2.0}};
  cfg.fixed_sigma = 0.5;
  cfg.sa.seed = 9001;
  const NPSAResult fit = fit_npsa(*model, subjects, cfg.fit_options());

  DPhiResult diag;
  diag.max_d = 0.01;
  diag.bound = std::log1p(0.01);
  diag.argmax.coords = {0.9, 1.2};
  diag.evals = 123;
  diag.cycles = 4;
  diag.converged = true;

  const std::string out = (dir / "bundle").string();
  io::write_report(out, *model, subjects, fit, cfg, &diag);

  for (const char* name : {"support_points.csv", "predictions.csv", "trace.csv",
                           "summary.txt", "result.json", "timing.txt"}) {
    CHECK(fs::exists(fs::path(out) / name));
  }

  // One support point: a raw row and a pruned row, both with weight 1.
  std::istringstream sp(slurp(out + "/support_points.csv"));
  std::string line;
  std::getline(sp, line);
  CHECK(line == "kind,index,K,V,weight");
  std::getline(sp, line);
  CHECK(line.substr(0, 6) == "raw,1,");
  CHECK(line.substr(line.rfind(',') + 1) == "1");
  std::getline(sp, line);
  CHECK(line.substr(0, 9) == "pruned,1,");
  CHECK_FALSE(std::getline(sp, line));

  // One prediction row per observation.
  std::istringstream pr(slurp(out + "/predictions.csv"));
  int lines = 0;
  while (std::getline(pr, line)) ++lines;
  CHECK(lines == 1 + 3);

  std::istringstream tr(slurp(out + "/trace.csv"));
  lines = 0;
  while (std::getline(tr, line)) ++lines;
  CHECK(lines == 1 + static_cast<int>(fit.trace.size()));

  const std::string summary = slurp(out + "/summary.txt");
  for (const char* key : {"model=onecomp", "mode=npsa3", "subjects=1", "support_points=1",
                          "pruned_points=1", "loglik=", "converged=true", "model_evals=",
                          "d_bound=", "d_over_loglik_pct=", "fit_r2="}) {
    CHECK_MESSAGE(summary.find(key) != std::string::npos, "missing key: ", key);
  }

  const std::string timing = slurp(out + "/timing.txt");
  CHECK(timing.find("wall_seconds=") != std::string::npos);
  CHECK(timing.find("workers=1") != std::string::npos);

  // The embedded result.json reloads.
  const io::SavedResult reloaded = io::load_result(out + "/result.json");
  CHECK(reloaded.result.best_loglik == fit.best_loglik);
  REQUIRE(reloaded.diagnostic.has_value());
  CHECK(reloaded.diagnostic->evals == 123);
}
