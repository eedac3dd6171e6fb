#include "npmix/types.hpp"

#include <cmath>
#include <stdexcept>

namespace npmix {

double Subject::covariate(const std::string& name) const {
  const auto it = covariates.find(name);
  if (it == covariates.end()) {
    throw std::invalid_argument("subject '" + id + "': missing covariate '" + name + "'");
  }
  return it->second;
}

void DiscreteDistribution::validate() const {
  if (points.size() != weights.size()) {
    throw std::invalid_argument("distribution: points and weights differ in length");
  }
  if (points.empty()) {
    throw std::invalid_argument("distribution: no support points");
  }
  const int d = points.front().dim();
  double total = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].dim() != d) {
      throw std::invalid_argument("distribution: support points differ in dimension");
    }
    if (!(weights[k] >= 0.0)) {
      throw std::invalid_argument("distribution: negative or NaN weight");
    }
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("distribution: weights sum to " + std::to_string(total) +
                                ", expected 1 within 1e-9");
  }
}

void DiscreteDistribution::renormalize() {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    throw std::invalid_argument("distribution: cannot renormalize, total weight is not positive");
  }
  for (double& w : weights) w /= total;
}

void validate_dataset(const std::vector<Subject>& subjects, const DataRequirements& req) {
  if (subjects.empty()) {
    throw std::invalid_argument("dataset: no subjects");
  }
  for (const Subject& s : subjects) {
    if (s.times.size() != s.observations.size()) {
      throw std::invalid_argument("subject '" + s.id + "': times and observations differ in length");
    }
    if (s.observations.empty()) {
      throw std::invalid_argument("subject '" + s.id + "': no observations");
    }
    for (std::size_t j = 0; j + 1 < s.times.size(); ++j) {
      if (!(s.times[j] < s.times[j + 1])) {
        throw std::invalid_argument("subject '" + s.id + "': observation times not strictly increasing");
      }
    }
    for (double t : s.times) {
      if (!std::isfinite(t)) {
        throw std::invalid_argument("subject '" + s.id + "': non-finite observation time");
      }
    }
    for (double y : s.observations) {
      if (!std::isfinite(y)) {
        throw std::invalid_argument("subject '" + s.id + "': non-finite observation");
      }
    }
    for (const DoseEvent& d : s.doses) {
      if (!std::isfinite(d.time) || !std::isfinite(d.amount) || !std::isfinite(d.duration)) {
        throw std::invalid_argument("subject '" + s.id + "': non-finite dose record");
      }
      if (d.amount < 0.0) {
        throw std::invalid_argument("subject '" + s.id + "': negative dose amount");
      }
      if (d.duration < 0.0) {
        throw std::invalid_argument("subject '" + s.id + "': negative infusion duration");
      }
    }
    for (const std::string& name : req.covariates) {
      if (!s.has_covariate(name)) {
        throw std::invalid_argument("subject '" + s.id + "': missing covariate '" + name + "'");
      }
      if (!std::isfinite(s.covariates.at(name))) {
        throw std::invalid_argument("subject '" + s.id + "': non-finite covariate '" + name + "'");
      }
    }
    if (req.needs_doses && s.doses.empty()) {
      throw std::invalid_argument("subject '" + s.id + "': model requires dose records");
    }
    if (req.single_observation && s.observations.size() != 1) {
      throw std::invalid_argument("subject '" + s.id + "': model expects exactly one observation");
    }
    if (req.integer_observations) {
      const double trials = s.covariate("n_trials");
      if (trials < 1.0 || trials != std::floor(trials)) {
        throw std::invalid_argument("subject '" + s.id + "': n_trials must be a positive integer");
      }
      for (double y : s.observations) {
        if (y < 0.0 || y > trials || y != std::floor(y)) {
          throw std::invalid_argument("subject '" + s.id +
                                      "': count observation outside [0, n_trials] or non-integer");
        }
      }
    }
  }
}

}  // namespace npmix
