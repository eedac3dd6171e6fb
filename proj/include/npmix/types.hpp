#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace npmix {

// One dosing record. duration == 0 means an instantaneous bolus; duration > 0
// means a constant-rate infusion of the full amount over [time, time+duration].
struct DoseEvent {
  double time = 0.0;
  double amount = 0.0;
  double duration = 0.0;
  std::string route;  // "oral", "iv", or empty when the model does not care
};

// Observations and dosing history for one experimental unit. times and
// observations are parallel arrays; times must be strictly increasing.
struct Subject {
  std::string id;
  std::vector<double> times;
  std::vector<double> observations;
  std::vector<DoseEvent> doses;
  std::map<std::string, double> covariates;

  int n_obs() const { return static_cast<int>(observations.size()); }
  double covariate(const std::string& name) const;
  bool has_covariate(const std::string& name) const {
    return covariates.find(name) != covariates.end();
  }
};

// Closed interval for one search coordinate; upper must exceed lower.
struct ParamRange {
  double lower = 0.0;
  double upper = 0.0;

  double width() const { return upper - lower; }
  double midpoint() const { return 0.5 * (lower + upper); }
  bool contains(double x) const { return x >= lower && x <= upper; }
};

// Search region for a fit: one range per support-point coordinate, one per
// structural fixed effect (empty when the fixed effect is held constant), and
// an optional range for a fitted error scale.
struct Bounds {
  std::vector<ParamRange> mu;
  std::vector<ParamRange> beta;
  std::optional<ParamRange> sigma;
};

// Location of one support point in parameter space.
struct SupportPoint {
  std::vector<double> coords;

  int dim() const { return static_cast<int>(coords.size()); }
};

// Discrete mixing distribution: support points with matching probabilities.
// Weights are kept normalized; renormalize() repairs accumulated drift.
struct DiscreteDistribution {
  std::vector<SupportPoint> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(points.size()); }
  void validate() const;  // throws std::invalid_argument on violation
  void renormalize();
};

// Full parameter state of a fit: fixed effects, error scale (NaN when the
// model has none or it is held fixed outside the candidate), and the mixing
// distribution.
struct Candidate {
  std::vector<double> beta;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  DiscreteDistribution distribution;
};

// What a model needs from each subject before it can be evaluated.
struct DataRequirements {
  std::vector<std::string> covariates;
  bool needs_doses = false;
  bool integer_observations = false;  // counts, validated against n_trials
  bool single_observation = false;    // exactly one observation per subject
};

// Validates a dataset against a model's requirements. Throws
// std::invalid_argument naming the offending subject and field.
void validate_dataset(const std::vector<Subject>& subjects, const DataRequirements& req);

}  // namespace npmix
