#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "npmix/types.hpp"

namespace npmix {

// How observation noise enters the subject likelihood.
//   kFixedScale:  y = f(t) + N(0, sigma^2), one scale shared by all
//                 observations; sigma may be fitted or held fixed.
//   kAffineScale: y_j = f(t_j) + N(0, sd_j^2) with sd_j = c0 + c1 * f(t_j);
//                 c0, c1 are fixed constants of the model.
//   kDiscrete:    the model owns its own discrete likelihood; no scale.
enum class ErrorKind { kFixedScale, kAffineScale, kDiscrete };

struct ErrorSpec {
  ErrorKind kind = ErrorKind::kFixedScale;
  double c0 = 0.0;
  double c1 = 0.0;
};

struct ModelDescriptor {
  std::string name;
  int mu_dim = 0;                       // dimension of one support point
  std::vector<std::string> mu_names;
  int beta_dim = 0;                     // structural fixed effects
  std::vector<std::string> beta_names;
  bool beta_structural = false;         // beta changes invalidate cached cells
  ErrorSpec error;
  DataRequirements requirements;
};

// One evaluated likelihood cell. ssr (sum of squared residuals) is kept for
// kFixedScale models so a change of sigma alone can rescale every cell
// without re-running the structural model; it is NaN otherwise.
struct CellEval {
  double loglik = 0.0;
  double ssr = std::numeric_limits<double>::quiet_NaN();
};

// A structural model plus error model. Implementations are pure: the same
// arguments always produce the same bits, and evaluate/predict never mutate
// shared state, so cells may be computed concurrently.
class Model {
 public:
  virtual ~Model() = default;

  virtual const ModelDescriptor& descriptor() const = 0;

  // Log likelihood ln p(Y_i | beta, mu, sigma) of the whole subject record.
  // sigma is used only by kFixedScale models. Non-finite structural output is
  // reported as -inf rather than an error; genuine evaluation failures
  // (integrator breakdown, invalid covariates) throw.
  virtual CellEval evaluate(const Subject& subject, std::span<const double> mu,
                            std::span<const double> beta, double sigma) const = 0;

  // Mean response at the subject's observation times.
  virtual std::vector<double> predict(const Subject& subject, std::span<const double> mu,
                                      std::span<const double> beta) const = 0;
};

// Tunables for the example models; defaults match their standard setup.
struct ModelOptions {
  double affine_c0 = 0.02;  // kAffineScale intercept
  double affine_c1 = 0.1;   // kAffineScale slope
  double ode_atol = 1e-4;
  double ode_rtol = 1e-4;
};

// Factory for the built-in models: "wang", "onecomp", "twocomp",
// "voriconazole". Throws std::invalid_argument for unknown names.
std::unique_ptr<Model> make_model(const std::string& name, const ModelOptions& options = {});

// Gaussian subject log likelihood for a vector of predictions. For
// kFixedScale the scale is sigma (must be > 0); for kAffineScale it is
// c0 + c1 * pred_j per observation (must be > 0, else an error naming the
// observation index). Non-finite predictions yield -inf. ssr_out, when given,
// receives the sum of squared residuals.
double gaussian_loglik(std::span<const double> obs, std::span<const double> pred,
                       const ErrorSpec& error, double sigma, double* ssr_out = nullptr);

}  // namespace npmix
