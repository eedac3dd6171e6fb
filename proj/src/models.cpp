#include "npmix/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "npmix/ode.hpp"

namespace npmix {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

// ln of the logistic function, stable for any finite argument.
double log_sigmoid(double eta) {
  return eta > 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
}

double sigmoid(double eta) {
  return eta > 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

void check_dims(const ModelDescriptor& d, std::span<const double> mu,
                std::span<const double> beta) {
  if (static_cast<int>(mu.size()) != d.mu_dim) {
    throw std::invalid_argument(d.name + ": support point has dimension " +
                                std::to_string(mu.size()) + ", expected " +
                                std::to_string(d.mu_dim));
  }
  if (static_cast<int>(beta.size()) != d.beta_dim) {
    throw std::invalid_argument(d.name + ": fixed-effect vector has dimension " +
                                std::to_string(beta.size()) + ", expected " +
                                std::to_string(d.beta_dim));
  }
}

// Binomial response with a logistic link on intercept + slope * x. The
// support point carries the random intercept; the shared slope is the one
// structural fixed effect. The combinatorial factor is constant in the
// parameters and is omitted.
class WangModel final : public Model {
 public:
  WangModel() {
    d_.name = "wang";
    d_.mu_dim = 1;
    d_.mu_names = {"mu"};
    d_.beta_dim = 1;
    d_.beta_names = {"beta"};
    d_.beta_structural = true;
    d_.error.kind = ErrorKind::kDiscrete;
    d_.requirements.covariates = {"n_trials", "x"};
    d_.requirements.integer_observations = true;
    d_.requirements.single_observation = true;
  }

  const ModelDescriptor& descriptor() const override { return d_; }

  CellEval evaluate(const Subject& s, std::span<const double> mu,
                    std::span<const double> beta, double) const override {
    check_dims(d_, mu, beta);
    const double y = s.observations.at(0);
    const double trials = s.covariate("n_trials");
    const double x = s.covariate("x");
    const double eta = mu[0] + beta[0] * x;
    CellEval cell;
    cell.loglik = y * log_sigmoid(eta) + (trials - y) * log_sigmoid(-eta);
    if (!std::isfinite(cell.loglik)) cell.loglik = kNegInf;
    return cell;
  }

  std::vector<double> predict(const Subject& s, std::span<const double> mu,
                              std::span<const double> beta) const override {
    check_dims(d_, mu, beta);
    const double trials = s.covariate("n_trials");
    const double x = s.covariate("x");
    return {trials * sigmoid(mu[0] + beta[0] * x)};
  }

 private:
  ModelDescriptor d_;
};

// One-compartment bolus model, y = (A/V) exp(-K t) with the dose amount A a
// fixed constant of the example rather than a data field.
class OneCompModel final : public Model {
 public:
  static constexpr double kAmount = 20.0;

  OneCompModel() {
    d_.name = "onecomp";
    d_.mu_dim = 2;
    d_.mu_names = {"K", "V"};
    d_.error.kind = ErrorKind::kFixedScale;
  }

  const ModelDescriptor& descriptor() const override { return d_; }

  CellEval evaluate(const Subject& s, std::span<const double> mu,
                    std::span<const double> beta, double sigma) const override {
    const std::vector<double> pred = predict(s, mu, beta);
    CellEval cell;
    cell.loglik = gaussian_loglik(s.observations, pred, d_.error, sigma, &cell.ssr);
    return cell;
  }

  std::vector<double> predict(const Subject& s, std::span<const double> mu,
                              std::span<const double> beta) const override {
    check_dims(d_, mu, beta);
    const double k = mu[0], v = mu[1];
    std::vector<double> pred(s.times.size());
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      pred[j] = (kAmount / v) * std::exp(-k * s.times[j]);
    }
    return pred;
  }

 private:
  ModelDescriptor d_;
};

// Two-compartment bolus model in its biexponential closed form. Elimination K
// and the transfer rates Kcp, Kpc give the hybrid rate constants
//   alpha, beta = ((K + Kcp + Kpc) +- sqrt((K + Kcp + Kpc)^2 - 4 K Kpc)) / 2
// and y = A exp(-alpha t) + B exp(-beta t) with
//   A = D (alpha - Kpc) / (V (alpha - beta)),  B = D (Kpc - beta) / (V (alpha - beta)).
class TwoCompModel final : public Model {
 public:
  static constexpr double kDose = 20.0;

  TwoCompModel() {
    d_.name = "twocomp";
    d_.mu_dim = 4;
    d_.mu_names = {"K", "V", "Kcp", "Kpc"};
    d_.error.kind = ErrorKind::kFixedScale;
  }

  const ModelDescriptor& descriptor() const override { return d_; }

  CellEval evaluate(const Subject& s, std::span<const double> mu,
                    std::span<const double> beta, double sigma) const override {
    const std::vector<double> pred = predict(s, mu, beta);
    CellEval cell;
    cell.loglik = gaussian_loglik(s.observations, pred, d_.error, sigma, &cell.ssr);
    return cell;
  }

  std::vector<double> predict(const Subject& s, std::span<const double> mu,
                              std::span<const double> beta) const override {
    check_dims(d_, mu, beta);
    const double k = mu[0], v = mu[1], kcp = mu[2], kpc = mu[3];
    const double sum = k + kcp + kpc;
    const double disc = sum * sum - 4.0 * k * kpc;
    if (disc < 0.0) {
      std::ostringstream msg;
      msg << "twocomp: complex eigenvalues for K=" << k << " Kcp=" << kcp << " Kpc=" << kpc;
      throw std::domain_error(msg.str());
    }
    const double root = std::sqrt(disc);
    const double alpha = 0.5 * (sum + root);
    const double beta_rate = 0.5 * (sum - root);
    if (alpha == beta_rate) {
      std::ostringstream msg;
      msg << "twocomp: repeated eigenvalue alpha == beta for K=" << k << " Kcp=" << kcp
          << " Kpc=" << kpc;
      throw std::domain_error(msg.str());
    }
    const double scale = kDose / (v * (alpha - beta_rate));
    const double coef_a = scale * (alpha - kpc);
    const double coef_b = scale * (kpc - beta_rate);
    std::vector<double> pred(s.times.size());
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      pred[j] = coef_a * std::exp(-alpha * s.times[j]) + coef_b * std::exp(-beta_rate * s.times[j]);
    }
    return pred;
  }

 private:
  ModelDescriptor d_;
};

// Oral/IV model with saturable elimination:
//   x1' = -Ka x1
//   x2' =  Ka x1 + r_iv(t) - Vm x2 / (Km V + x2) - Kcp x2 + Kpc x3
//   x3' =  Kcp x2 - Kpc x3
// with Vm = Vmax0 wt^0.75, V = Vc0 wt and y = x2 / V. A dose row with zero
// duration is an oral bolus into x1 scaled by the bioavailability FA1; a row
// with positive duration infuses into x2 at a constant rate. Noise scale is
// affine in the prediction.
class VoriconazoleModel final : public Model {
 public:
  explicit VoriconazoleModel(const ModelOptions& options) : options_(options) {
    d_.name = "voriconazole";
    d_.mu_dim = 7;
    d_.mu_names = {"Ka", "Vmax0", "Km", "Vc0", "FA1", "Kcp", "Kpc"};
    d_.error.kind = ErrorKind::kAffineScale;
    d_.error.c0 = options.affine_c0;
    d_.error.c1 = options.affine_c1;
    d_.requirements.covariates = {"wt"};
    d_.requirements.needs_doses = true;
  }

  const ModelDescriptor& descriptor() const override { return d_; }

  CellEval evaluate(const Subject& s, std::span<const double> mu,
                    std::span<const double> beta, double) const override {
    const std::vector<double> pred = predict(s, mu, beta);
    CellEval cell;
    cell.loglik = gaussian_loglik(s.observations, pred, d_.error, 0.0, nullptr);
    return cell;
  }

  std::vector<double> predict(const Subject& s, std::span<const double> mu,
                              std::span<const double> beta) const override {
    check_dims(d_, mu, beta);
    const double ka = mu[0], vmax0 = mu[1], km = mu[2], vc0 = mu[3], fa1 = mu[4];
    const double kcp = mu[5], kpc = mu[6];
    const double wt = s.covariate("wt");
    if (!(wt > 0.0)) {
      throw std::invalid_argument("voriconazole: subject '" + s.id +
                                  "' needs a positive wt covariate");
    }
    const double vm = vmax0 * std::pow(wt, 0.75);
    const double v = vc0 * wt;
    if (!(v > 0.0)) {
      return std::vector<double>(s.times.size(), std::numeric_limits<double>::quiet_NaN());
    }

    IntegrationProblem prob;
    prob.dim = 3;
    prob.t0 = 0.0;
    prob.y0 = {0.0, 0.0, 0.0};
    prob.atol = options_.ode_atol;
    prob.rtol = options_.ode_rtol;
    prob.rhs = [=](double, const double* x, double* dx) {
      const double elim = vm == 0.0 ? 0.0 : vm * x[1] / (km * v + x[1]);
      dx[0] = -ka * x[0];
      dx[1] = ka * x[0] - elim - kcp * x[1] + kpc * x[2];
      dx[2] = kcp * x[1] - kpc * x[2];
    };
    for (const DoseEvent& dose : s.doses) {
      if (dose.time < 0.0) {
        throw std::invalid_argument("voriconazole: subject '" + s.id +
                                    "' has a dose before time zero");
      }
      if (dose.duration == 0.0) {
        prob.jumps.push_back({dose.time, 0, dose.amount * fa1});
      } else {
        prob.windows.push_back({dose.time, dose.time + dose.duration, 1,
                                dose.amount / dose.duration});
      }
    }
    for (double t : s.times) {
      if (t < 0.0) {
        throw std::invalid_argument("voriconazole: subject '" + s.id +
                                    "' has an observation before time zero");
      }
    }

    std::vector<double> states;
    try {
      states = integrate(prob, s.times);
    } catch (const IntegrationError& err) {
      std::ostringstream msg;
      msg << "voriconazole: integration failed for subject '" << s.id << "' at (";
      for (int j = 0; j < d_.mu_dim; ++j) msg << (j ? ", " : "") << mu[j];
      msg << "): " << err.what();
      throw std::runtime_error(msg.str());
    }
    std::vector<double> pred(s.times.size());
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      pred[j] = states[j * 3 + 1] / v;
    }
    return pred;
  }

 private:
  ModelDescriptor d_;
  ModelOptions options_;
};

}  // namespace

double gaussian_loglik(std::span<const double> obs, std::span<const double> pred,
                       const ErrorSpec& error, double sigma, double* ssr_out) {
  if (obs.size() != pred.size()) {
    throw std::invalid_argument("gaussian_loglik: observation and prediction counts differ");
  }
  if (error.kind == ErrorKind::kDiscrete) {
    throw std::invalid_argument("gaussian_loglik: model has no Gaussian error component");
  }
  const std::size_t m = obs.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (!std::isfinite(pred[j])) {
      if (ssr_out) *ssr_out = std::numeric_limits<double>::infinity();
      return kNegInf;
    }
  }
  double ssr = 0.0;
  double loglik = 0.0;
  if (error.kind == ErrorKind::kFixedScale) {
    if (!(sigma > 0.0)) {
      throw std::domain_error("gaussian_loglik: sigma must be positive, got " +
                              std::to_string(sigma));
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double r = obs[j] - pred[j];
      ssr += r * r;
    }
    loglik = -static_cast<double>(m) * (std::log(sigma) + kHalfLog2Pi) - ssr / (2.0 * sigma * sigma);
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      const double sd = error.c0 + error.c1 * pred[j];
      if (!(sd > 0.0)) {
        throw std::domain_error("gaussian_loglik: non-positive noise scale at observation " +
                                std::to_string(j));
      }
      const double r = obs[j] - pred[j];
      ssr += r * r;
      loglik += -std::log(sd) - kHalfLog2Pi - r * r / (2.0 * sd * sd);
    }
  }
  if (ssr_out) *ssr_out = ssr;
  if (!std::isfinite(loglik)) loglik = kNegInf;
  return loglik;
}

std::unique_ptr<Model> make_model(const std::string& name, const ModelOptions& options) {
  if (name == "wang") return std::make_unique<WangModel>();
  if (name == "onecomp") return std::make_unique<OneCompModel>();
  if (name == "twocomp") return std::make_unique<TwoCompModel>();
  if (name == "voriconazole") return std::make_unique<VoriconazoleModel>(options);
  throw std::invalid_argument("unknown model '" + name +
                              "'; expected wang, onecomp, twocomp, or voriconazole");
}

}  // namespace npmix
