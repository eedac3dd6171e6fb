#include "npmix/io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "npmix/weights.hpp"

namespace npmix::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest exact decimal form; every number in every text output goes
// through here so reruns produce identical bytes.
std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void trim(std::string& s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  s.erase(0, b);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (std::string& s : cells) trim(s);
  return cells;
}

double parse_number(const std::string& cell, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v)) {
    throw std::invalid_argument(where + ": bad number '" + cell + "'");
  }
  return v;
}

std::string spot(const std::string& path, int line_no) {
  return path + ":" + std::to_string(line_no);
}

void sort_distribution(DiscreteDistribution& d) {
  std::vector<int> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return d.points[a].coords < d.points[b].coords;
  });
  DiscreteDistribution sorted;
  sorted.points.reserve(d.size());
  sorted.weights.reserve(d.size());
  for (int i : idx) {
    sorted.points.push_back(std::move(d.points[i]));
    sorted.weights.push_back(d.weights[i]);
  }
  d = std::move(sorted);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("dataset '" + path + "': cannot open");

  static const char* kFixed[] = {"id", "time", "out", "dose", "duration", "route"};
  constexpr int kFixedCount = 6;

  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string probe = line;
    trim(probe);
    if (probe.empty()) continue;
    header = split_csv(line);
    break;
  }
  if (header.size() < kFixedCount) {
    throw std::invalid_argument("dataset '" + path +
                                "': header must start with id,time,out,dose,duration,route");
  }
  for (int j = 0; j < kFixedCount; ++j) {
    std::string h = header[j];
    std::transform(h.begin(), h.end(), h.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (h != kFixed[j]) {
      throw std::invalid_argument(spot(path, line_no) + ": column " + std::to_string(j + 1) +
                                  " must be '" + kFixed[j] + "', got '" + header[j] + "'");
    }
  }

  Dataset ds;
  for (std::size_t j = kFixedCount; j < header.size(); ++j) {
    if (header[j].empty()) {
      throw std::invalid_argument(spot(path, line_no) + ": empty covariate column name");
    }
    if (std::find(ds.covariate_columns.begin(), ds.covariate_columns.end(), header[j]) !=
        ds.covariate_columns.end()) {
      throw std::invalid_argument(spot(path, line_no) + ": duplicate column '" + header[j] + "'");
    }
    ds.covariate_columns.push_back(header[j]);
  }

  std::set<std::string> closed;
  Subject* cur = nullptr;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string probe = line;
    trim(probe);
    if (probe.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument(spot(path, line_no) + ": expected " +
                                  std::to_string(header.size()) + " columns, got " +
                                  std::to_string(cells.size()));
    }
    const std::string& id = cells[0];
    if (id.empty()) throw std::invalid_argument(spot(path, line_no) + ": empty id");

    if (cur == nullptr || cur->id != id) {
      if (closed.count(id)) {
        throw std::invalid_argument(spot(path, line_no) + ": rows for subject '" + id +
                                    "' are not contiguous");
      }
      if (cur != nullptr) closed.insert(cur->id);
      ds.subjects.emplace_back();
      cur = &ds.subjects.back();
      cur->id = id;
      for (std::size_t j = 0; j < ds.covariate_columns.size(); ++j) {
        cur->covariates[ds.covariate_columns[j]] = parse_number(
            cells[kFixedCount + j],
            spot(path, line_no) + ", column " + ds.covariate_columns[j]);
      }
    } else {
      for (std::size_t j = 0; j < ds.covariate_columns.size(); ++j) {
        const std::string& name = ds.covariate_columns[j];
        const double v =
            parse_number(cells[kFixedCount + j], spot(path, line_no) + ", column " + name);
        if (v != cur->covariates.at(name)) {
          throw std::invalid_argument(spot(path, line_no) + ": covariate '" + name +
                                      "' changes within subject '" + id + "'");
        }
      }
    }

    const double time = parse_number(cells[1], spot(path, line_no) + ", column time");
    bool used = false;
    if (!cells[2].empty()) {
      cur->times.push_back(time);
      cur->observations.push_back(parse_number(cells[2], spot(path, line_no) + ", column out"));
      used = true;
    }
    if (!cells[3].empty()) {
      DoseEvent ev;
      ev.time = time;
      ev.amount = parse_number(cells[3], spot(path, line_no) + ", column dose");
      ev.duration =
          cells[4].empty() ? 0.0 : parse_number(cells[4], spot(path, line_no) + ", column duration");
      ev.route = cells[5];
      cur->doses.push_back(ev);
      used = true;
    } else if (!cells[4].empty() || !cells[5].empty()) {
      throw std::invalid_argument(spot(path, line_no) + ": duration/route given without a dose");
    }
    if (!used) {
      throw std::invalid_argument(spot(path, line_no) +
                                  ": row carries neither an observation nor a dose");
    }
  }
  if (ds.subjects.empty()) throw std::invalid_argument("dataset '" + path + "': no subjects");
  return ds;
}

void write_dataset(const std::string& path, const std::vector<Subject>& subjects,
                   std::span<const std::string> covariate_columns) {
  std::ofstream f = open_out(path);
  f << "id,time,out,dose,duration,route";
  for (const std::string& c : covariate_columns) f << ',' << c;
  f << '\n';
  for (const Subject& s : subjects) {
    std::string covs;
    for (const std::string& c : covariate_columns) covs += "," + fmt(s.covariate(c));
    // Stable merge by time, dose rows first at ties, so a reload reproduces
    // both vectors in their original order.
    std::size_t oi = 0, di = 0;
    while (oi < s.times.size() || di < s.doses.size()) {
      const bool take_dose =
          di < s.doses.size() && (oi >= s.times.size() || s.doses[di].time <= s.times[oi]);
      if (take_dose) {
        const DoseEvent& ev = s.doses[di++];
        f << s.id << ',' << fmt(ev.time) << ",," << fmt(ev.amount) << ',' << fmt(ev.duration)
          << ',' << ev.route << covs << '\n';
      } else {
        f << s.id << ',' << fmt(s.times[oi]) << ',' << fmt(s.observations[oi]) << ",,,"
          << covs << '\n';
        ++oi;
      }
    }
  }
}

SyntheticResult generate_synthetic(const std::string& example, int n, std::uint64_t seed,
                                   const std::string& out_dir) {
  if (n < 1) throw std::invalid_argument("simulate: n must be at least 1");
  if (example != "onecomp" && example != "twocomp") {
    throw std::invalid_argument("simulate: unknown example '" + example +
                                "' (choices: onecomp, twocomp)");
  }
  const auto model = make_model(example);
  const std::vector<double> times = {0.2, 0.4, 0.6, 0.8, 1.0};
  const double noise_sd = 0.5;

  const int dim = model->descriptor().mu_dim;
  std::vector<Subject> subjects(n);
  std::vector<std::vector<double>> truth(n);
  for (int i = 0; i < n; ++i) {
    // One substream per subject: the first n subjects of a larger run are
    // identical to a run of size n.
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    // Rate and volume parameters are physically positive; a draw at or below
    // 0.05 (beyond 4 sigma under every recipe) is redrawn.
    const auto positive = [&rng](double mean, double sd) {
      double v = rng.normal(mean, sd);
      while (!(v > 0.05)) v = rng.normal(mean, sd);
      return v;
    };
    std::vector<double>& theta = truth[i];
    if (example == "onecomp") {
      const bool low = rng.uniform01() < 0.5;
      theta.push_back(low ? positive(0.5, 0.05) : positive(1.5, 0.15));  // K
      theta.push_back(positive(1.0, 0.2));                               // V
    } else {
      const bool low = rng.uniform01() < 0.5;
      theta.push_back(positive(low ? 0.5 : 0.8, 0.06));  // K
      theta.push_back(positive(1.0, 0.2));               // V
      theta.push_back(positive(0.5, 0.2));               // Kcp
      theta.push_back(positive(2.0, 0.1));               // Kpc
    }
    Subject& s = subjects[i];
    s.id = std::to_string(i + 1);
    s.times = times;
    const std::vector<double> mean = model->predict(s, theta, {});
    s.observations.resize(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
      s.observations[j] = mean[j] + rng.normal(0.0, noise_sd);
    }
  }
  (void)dim;

  fs::create_directories(out_dir);
  SyntheticResult out;
  out.data_path = (fs::path(out_dir) / (example + "_data.csv")).string();
  out.truth_path = (fs::path(out_dir) / (example + "_truth.csv")).string();
  write_dataset(out.data_path, subjects, {});

  std::ofstream tf = open_out(out.truth_path);
  tf << "id";
  for (const std::string& name : model->descriptor().mu_names) tf << ',' << name;
  tf << '\n';
  for (int i = 0; i < n; ++i) {
    tf << subjects[i].id;
    for (double v : truth[i]) tf << ',' << fmt(v);
    tf << '\n';
  }
  return out;
}

ParamRange parse_range(const std::string& text, const std::string& what) {
  const std::size_t pos = text.find(':');
  if (pos == std::string::npos) {
    throw std::invalid_argument(what + ": expected 'lo:hi', got '" + text + "'");
  }
  ParamRange r;
  r.lower = parse_number(text.substr(0, pos), what);
  r.upper = parse_number(text.substr(pos + 1), what);
  if (!(r.upper > r.lower)) {
    throw std::invalid_argument(what + ": upper must exceed lower in '" + text + "'");
  }
  return r;
}

std::vector<ParamRange> parse_ranges(const std::string& text, int expected_dim,
                                     const std::string& what) {
  std::vector<ParamRange> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      trim(cur);
      if (!cur.empty()) out.push_back(parse_range(cur, what));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (out.empty()) throw std::invalid_argument(what + ": no ranges given");
  if (static_cast<int>(out.size()) == 1 && expected_dim > 1) {
    out.resize(expected_dim, out[0]);
  }
  if (static_cast<int>(out.size()) != expected_dim) {
    throw std::invalid_argument(what + ": expected " + std::to_string(expected_dim) +
                                " ranges, got " + std::to_string(out.size()));
  }
  return out;
}

void RunConfig::validate(const ModelDescriptor& desc) const {
  if (mode != "npsa2" && mode != "npsa3" && mode != "osat") {
    throw std::invalid_argument("config: mode must be npsa2, npsa3 or osat, got '" + mode + "'");
  }
  sa.validate();
  if (workers < 1) throw std::invalid_argument("config: workers must be at least 1");
  if (num_points < 0) throw std::invalid_argument("config: points must be >= 0");
  if (num_points > 0 && mode != "npsa2") {
    throw std::invalid_argument("config: points is only meaningful for mode npsa2");
  }
  if (static_cast<int>(mu_bounds.size()) != desc.mu_dim) {
    throw std::invalid_argument("config: model '" + desc.name + "' needs " +
                                std::to_string(desc.mu_dim) + " support bounds, got " +
                                std::to_string(mu_bounds.size()));
  }
  for (const ParamRange& r : mu_bounds) {
    if (!(r.upper > r.lower)) throw std::invalid_argument("config: bound upper must exceed lower");
  }
  if (desc.beta_dim == 0) {
    if (!beta_bounds.empty() || !fixed_beta.empty()) {
      throw std::invalid_argument("config: model '" + desc.name + "' has no fixed effects");
    }
  } else {
    const bool annealed = !beta_bounds.empty();
    const bool fixed = !fixed_beta.empty();
    if (annealed == fixed) {
      throw std::invalid_argument("config: give exactly one of beta bounds or fixed beta");
    }
    const std::size_t got = annealed ? beta_bounds.size() : fixed_beta.size();
    if (got != static_cast<std::size_t>(desc.beta_dim)) {
      throw std::invalid_argument("config: model '" + desc.name + "' has " +
                                  std::to_string(desc.beta_dim) + " fixed effects, got " +
                                  std::to_string(got));
    }
    if (mode == "osat" && annealed) {
      throw std::invalid_argument("config: osat needs fixed effects held at fixed values");
    }
  }
  if (desc.error.kind == ErrorKind::kFixedScale) {
    if (sigma_bounds.has_value() == fixed_sigma.has_value()) {
      throw std::invalid_argument("config: give exactly one of sigma bounds or fixed sigma");
    }
    if (fixed_sigma && !(*fixed_sigma > 0.0)) {
      throw std::invalid_argument("config: sigma must be positive");
    }
    if (sigma_bounds && !(sigma_bounds->lower > 0.0 && sigma_bounds->upper > sigma_bounds->lower)) {
      throw std::invalid_argument("config: sigma bounds need 0 < lower < upper");
    }
  } else if (sigma_bounds || fixed_sigma) {
    throw std::invalid_argument("config: model '" + desc.name + "' has no fitted error scale");
  }
  if (!(prune_floor >= 0.0 && prune_floor < 1.0)) {
    throw std::invalid_argument("config: prune floor must lie in [0, 1)");
  }
  if (!(merge_radius >= 0.0)) throw std::invalid_argument("config: merge radius must be >= 0");
  if (d_extra_seeds < 0) throw std::invalid_argument("config: d-extra-seeds must be >= 0");
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.choice = mode == "npsa2" ? 2 : 3;
  o.num_points = num_points;
  o.fixed_sigma = fixed_sigma;
  o.fixed_beta = fixed_beta;
  o.workers = workers;
  o.sa = sa;
  o.bounds.mu = mu_bounds;
  o.bounds.beta = beta_bounds;
  o.bounds.sigma = sigma_bounds;
  return o;
}

OsatOptions RunConfig::osat_options() const {
  OsatOptions o;
  o.mu_bounds = mu_bounds;
  o.fixed_beta = fixed_beta;
  o.fixed_sigma = fixed_sigma;
  if (sigma_bounds) {
    o.consensus_sigma = true;
    o.sigma_bounds = sigma_bounds;
  }
  o.workers = workers;
  o.sa = sa;
  return o;
}

DPhiOptions RunConfig::dphi_options() const {
  DPhiOptions o;
  o.bounds = mu_bounds;
  o.extra_seeds = d_extra_seeds;
  o.workers = workers;
  o.sa.seed = sa.seed;
  if (d_t0) o.sa.t0 = *d_t0;
  if (d_rt) o.sa.rt = *d_rt;
  if (d_ns) o.sa.ns = *d_ns;
  if (d_nt) o.sa.nt = *d_nt;
  return o;
}

std::vector<double> RunConfig::merge_radii() const {
  std::vector<double> r;
  r.reserve(mu_bounds.size());
  for (const ParamRange& b : mu_bounds) r.push_back(merge_radius * b.width());
  return r;
}

namespace {

json range_to_json(const ParamRange& r) { return json::array({r.lower, r.upper}); }

ParamRange range_from_json(const json& j) {
  ParamRange r;
  r.lower = j.at(0).get<double>();
  r.upper = j.at(1).get<double>();
  return r;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["model"] = c.model;
  j["data"] = c.data;
  j["mode"] = c.mode;
  j["num_points"] = c.num_points;
  json mu = json::array();
  for (const ParamRange& r : c.mu_bounds) mu.push_back(range_to_json(r));
  j["mu_bounds"] = mu;
  json beta = json::array();
  for (const ParamRange& r : c.beta_bounds) beta.push_back(range_to_json(r));
  j["beta_bounds"] = beta;
  j["fixed_beta"] = c.fixed_beta;
  j["sigma_bounds"] = c.sigma_bounds ? range_to_json(*c.sigma_bounds) : json();
  j["fixed_sigma"] = c.fixed_sigma ? json(*c.fixed_sigma) : json();
  j["sa"] = {{"t0", c.sa.t0},   {"rt", c.sa.rt},           {"ns", c.sa.ns},
             {"nt", c.sa.nt},   {"eps", c.sa.eps},         {"n_eps", c.sa.n_eps},
             {"seed", c.sa.seed}, {"max_cycles", c.sa.max_cycles}};
  j["compute_d"] = c.compute_d;
  j["prune_floor"] = c.prune_floor;
  j["merge_radius"] = c.merge_radius;
  j["d_extra_seeds"] = c.d_extra_seeds;
  j["d_t0"] = c.d_t0 ? json(*c.d_t0) : json();
  j["d_rt"] = c.d_rt ? json(*c.d_rt) : json();
  j["d_ns"] = c.d_ns ? json(*c.d_ns) : json();
  j["d_nt"] = c.d_nt ? json(*c.d_nt) : json();
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.model = j.at("model").get<std::string>();
  c.data = j.at("data").get<std::string>();
  c.mode = j.at("mode").get<std::string>();
  c.num_points = j.at("num_points").get<int>();
  for (const json& r : j.at("mu_bounds")) c.mu_bounds.push_back(range_from_json(r));
  for (const json& r : j.at("beta_bounds")) c.beta_bounds.push_back(range_from_json(r));
  c.fixed_beta = j.at("fixed_beta").get<std::vector<double>>();
  if (!j.at("sigma_bounds").is_null()) c.sigma_bounds = range_from_json(j.at("sigma_bounds"));
  if (!j.at("fixed_sigma").is_null()) c.fixed_sigma = j.at("fixed_sigma").get<double>();
  const json& sa = j.at("sa");
  c.sa.t0 = sa.at("t0").get<double>();
  c.sa.rt = sa.at("rt").get<double>();
  c.sa.ns = sa.at("ns").get<int>();
  c.sa.nt = sa.at("nt").get<int>();
  c.sa.eps = sa.at("eps").get<double>();
  c.sa.n_eps = sa.at("n_eps").get<int>();
  c.sa.seed = sa.at("seed").get<std::uint64_t>();
  c.sa.max_cycles = sa.at("max_cycles").get<int>();
  c.compute_d = j.at("compute_d").get<bool>();
  c.prune_floor = j.at("prune_floor").get<double>();
  c.merge_radius = j.at("merge_radius").get<double>();
  c.d_extra_seeds = j.at("d_extra_seeds").get<int>();
  if (!j.at("d_t0").is_null()) c.d_t0 = j.at("d_t0").get<double>();
  if (!j.at("d_rt").is_null()) c.d_rt = j.at("d_rt").get<double>();
  if (!j.at("d_ns").is_null()) c.d_ns = j.at("d_ns").get<int>();
  if (!j.at("d_nt").is_null()) c.d_nt = j.at("d_nt").get<int>();
  return c;
}

}  // namespace

void save_result(const std::string& path, const NPSAResult& result, const RunConfig& config,
                 const DPhiResult* diagnostic) {
  json j;
  j["format"] = "npmix-result-v1";
  j["n"] = result.n;
  j["num_points"] = result.num_points;
  j["loglik"] = result.best_loglik;
  j["energy"] = result.best_energy;
  j["cycles"] = result.cycles;
  j["converged"] = result.converged;
  j["eval_count"] = result.eval_count;

  json cand;
  cand["beta"] = result.best.beta;
  cand["sigma"] = std::isfinite(result.best.sigma) ? json(result.best.sigma) : json();
  json pts = json::array();
  for (const SupportPoint& p : result.best.distribution.points) pts.push_back(p.coords);
  cand["points"] = pts;
  cand["weights"] = result.best.distribution.weights;
  j["candidate"] = cand;

  json tr = json::array();
  for (const CycleRecord& c : result.trace) {
    tr.push_back({{"cycle", c.cycle},
                  {"temperature", c.temperature},
                  {"final_energy", c.final_energy},
                  {"best_energy", c.best_energy},
                  {"final_loglik", c.final_loglik},
                  {"best_loglik", c.best_loglik},
                  {"evals", c.evals},
                  {"accept_rate", c.accept_rate}});
  }
  j["trace"] = tr;

  if (diagnostic != nullptr) {
    j["diagnostic"] = {{"max_d", diagnostic->max_d},     {"bound", diagnostic->bound},
                       {"argmax", diagnostic->argmax.coords}, {"evals", diagnostic->evals},
                       {"cycles", diagnostic->cycles},   {"converged", diagnostic->converged}};
  }
  j["config"] = config_to_json(config);

  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

SavedResult load_result(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("result '" + path + "': cannot open");
  json j;
  try {
    f >> j;
    SavedResult out;
    out.config = config_from_json(j.at("config"));
    NPSAResult& r = out.result;
    r.n = j.at("n").get<int>();
    r.num_points = j.at("num_points").get<int>();
    r.best_loglik = j.at("loglik").get<double>();
    r.best_energy = j.at("energy").get<double>();
    r.cycles = j.at("cycles").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.eval_count = j.at("eval_count").get<std::uint64_t>();
    const json& cand = j.at("candidate");
    r.best.beta = cand.at("beta").get<std::vector<double>>();
    r.best.sigma = cand.at("sigma").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                              : cand.at("sigma").get<double>();
    for (const json& p : cand.at("points")) {
      SupportPoint sp;
      sp.coords = p.get<std::vector<double>>();
      r.best.distribution.points.push_back(std::move(sp));
    }
    r.best.distribution.weights = cand.at("weights").get<std::vector<double>>();
    for (const json& t : j.at("trace")) {
      CycleRecord c;
      c.cycle = t.at("cycle").get<int>();
      c.temperature = t.at("temperature").get<double>();
      c.final_energy = t.at("final_energy").get<double>();
      c.best_energy = t.at("best_energy").get<double>();
      c.final_loglik = t.at("final_loglik").get<double>();
      c.best_loglik = t.at("best_loglik").get<double>();
      c.evals = t.at("evals").get<std::uint64_t>();
      c.accept_rate = t.at("accept_rate").get<double>();
      r.trace.push_back(c);
    }
    if (j.contains("diagnostic")) {
      const json& d = j.at("diagnostic");
      DPhiResult diag;
      diag.max_d = d.at("max_d").get<double>();
      diag.bound = d.at("bound").get<double>();
      diag.argmax.coords = d.at("argmax").get<std::vector<double>>();
      diag.evals = d.at("evals").get<std::uint64_t>();
      diag.cycles = d.at("cycles").get<int>();
      diag.converged = d.at("converged").get<bool>();
      out.diagnostic = std::move(diag);
    }
    return out;
  } catch (const json::exception& e) {
    throw std::invalid_argument("result '" + path + "': " + e.what());
  }
}

FitStats regression_stats(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) {
    throw std::invalid_argument("regression_stats: length mismatch");
  }
  FitStats st;
  st.count = static_cast<int>(predicted.size());
  if (st.count == 0) return st;
  double mp = 0.0, mo = 0.0;
  for (int i = 0; i < st.count; ++i) {
    mp += predicted[i];
    mo += observed[i];
  }
  mp /= st.count;
  mo /= st.count;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < st.count; ++i) {
    const double dx = predicted[i] - mp;
    const double dy = observed[i] - mo;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  st.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  st.intercept = mo - st.slope * mp;
  for (int i = 0; i < st.count; ++i) {
    const double res = observed[i] - (st.slope * predicted[i] + st.intercept);
    st.rss += res * res;
  }
  st.r2 = syy > 0.0 ? 1.0 - st.rss / syy : (st.rss == 0.0 ? 1.0 : 0.0);
  return st;
}

void write_report(const std::string& out_dir, const Model& model,
                  const std::vector<Subject>& subjects, const NPSAResult& result,
                  const RunConfig& config, const DPhiResult* diagnostic) {
  fs::create_directories(out_dir);
  const ModelDescriptor& desc = model.descriptor();
  const auto at = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  DiscreteDistribution raw = result.best.distribution;
  sort_distribution(raw);
  const DiscreteDistribution pruned = prune_and_merge(result.best.distribution, config.prune_floor,
                                                      config.merge_radii(), result.n);

  {
    std::ofstream f = open_out(at("support_points.csv"));
    f << "kind,index";
    for (const std::string& name : desc.mu_names) f << ',' << name;
    f << ",weight\n";
    const auto rows = [&](const char* kind, const DiscreteDistribution& d) {
      for (int k = 0; k < d.size(); ++k) {
        f << kind << ',' << k + 1;
        for (double c : d.points[k].coords) f << ',' << fmt(c);
        f << ',' << fmt(d.weights[k]) << '\n';
      }
    };
    rows("raw", raw);
    rows("pruned", pruned);
  }

  std::vector<double> all_obs, all_ind;
  {
    std::ofstream f = open_out(at("predictions.csv"));
    f << "id,time,observed,population,individual\n";
    for (const Subject& s : subjects) {
      const std::vector<double> pop = population_prediction(model, s, result.best);
      const std::vector<double> ind = individual_prediction(model, s, result.best);
      for (std::size_t j = 0; j < s.times.size(); ++j) {
        f << s.id << ',' << fmt(s.times[j]) << ',' << fmt(s.observations[j]) << ','
          << fmt(pop[j]) << ',' << fmt(ind[j]) << '\n';
        all_obs.push_back(s.observations[j]);
        all_ind.push_back(ind[j]);
      }
    }
  }
  const FitStats st = regression_stats(all_ind, all_obs);

  {
    std::ofstream f = open_out(at("trace.csv"));
    f << "cycle,temperature,final_energy,best_energy,final_loglik,best_loglik,evals,"
         "accept_rate\n";
    for (const CycleRecord& c : result.trace) {
      f << c.cycle << ',' << fmt(c.temperature) << ',' << fmt(c.final_energy) << ','
        << fmt(c.best_energy) << ',' << fmt(c.final_loglik) << ',' << fmt(c.best_loglik) << ','
        << c.evals << ',' << fmt(c.accept_rate) << '\n';
    }
  }

  {
    std::ofstream f = open_out(at("summary.txt"));
    f << "model=" << desc.name << '\n';
    f << "mode=" << config.mode << '\n';
    f << "subjects=" << result.n << '\n';
    f << "support_points=" << result.num_points << '\n';
    f << "pruned_points=" << pruned.size() << '\n';
    f << "loglik=" << fmt(result.best_loglik) << '\n';
    f << "energy=" << fmt(result.best_energy) << '\n';
    f << "cycles=" << result.cycles << '\n';
    f << "converged=" << (result.converged ? "true" : "false") << '\n';
    f << "model_evals=" << result.eval_count << '\n';
    if (diagnostic != nullptr) {
      const double pct = result.best_loglik != 0.0
                             ? 100.0 * diagnostic->bound / std::abs(result.best_loglik)
                             : std::numeric_limits<double>::infinity();
      f << "d_max=" << fmt(diagnostic->max_d) << '\n';
      f << "d_bound=" << fmt(diagnostic->bound) << '\n';
      f << "d_over_loglik_pct=" << fmt(pct) << '\n';
      f << "d_evals=" << diagnostic->evals << '\n';
    }
    f << "fit_slope=" << fmt(st.slope) << '\n';
    f << "fit_intercept=" << fmt(st.intercept) << '\n';
    f << "fit_r2=" << fmt(st.r2) << '\n';
    f << "fit_rss=" << fmt(st.rss) << '\n';
  }

  save_result(at("result.json"), result, config, diagnostic);

  {
    std::ofstream f = open_out(at("timing.txt"));
    f << "wall_seconds=" << fmt(result.wall_seconds) << '\n';
    f << "workers=" << config.workers << '\n';
  }
}

}  // namespace npmix::io
