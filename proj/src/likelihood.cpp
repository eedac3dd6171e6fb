#include "npmix/likelihood.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace npmix {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;
}  // namespace

LikelihoodMatrix::LikelihoodMatrix(int n, int K, bool keep_ssr)
    : n_(n), K_(K),
      loglik_(static_cast<std::size_t>(n) * K, kNegInf),
      values_(static_cast<std::size_t>(n) * K, 0.0),
      obs_count_(n, 0) {
  if (n < 1 || K < 1) {
    throw std::invalid_argument("likelihood matrix needs at least one row and column");
  }
  if (keep_ssr) ssr_.assign(static_cast<std::size_t>(n) * K, 0.0);
}

double LikelihoodMatrix::clamped_exp(double loglik) {
  return loglik < -700.0 ? 0.0 : std::exp(loglik);
}

void LikelihoodMatrix::set_cell(int i, int k, const CellEval& cell) {
  const std::size_t at = idx(i, k);
  loglik_[at] = cell.loglik;
  values_[at] = clamped_exp(cell.loglik);
  if (!ssr_.empty()) ssr_[at] = cell.ssr;
}

void LikelihoodMatrix::refresh_mix(std::span<const double> weights) {
  if (static_cast<int>(weights.size()) != K_) {
    throw std::invalid_argument("refresh_mix: weight count does not match columns");
  }
  row_mix_.resize(n_);
  mix_weights_.assign(weights.begin(), weights.end());
  for (int i = 0; i < n_; ++i) {
    double total = 0.0;
    const double* row = &values_[idx(i, 0)];
    for (int k = 0; k < K_; ++k) total += weights[k] * row[k];
    row_mix_[i] = total;
  }
}

void LikelihoodMatrix::replace_column(int k, std::span<const CellEval> column,
                                      std::span<const double> weights) {
  if (static_cast<int>(column.size()) != n_) {
    throw std::invalid_argument("replace_column: column length does not match rows");
  }
  for (int i = 0; i < n_; ++i) set_cell(i, k, column[i]);
  refresh_mix(weights);
}

void LikelihoodMatrix::assign_all(std::span<const CellEval> cells, std::span<const double> weights) {
  if (cells.size() != values_.size()) {
    throw std::invalid_argument("assign_all: cell count does not match table size");
  }
  for (int i = 0; i < n_; ++i) {
    for (int k = 0; k < K_; ++k) set_cell(i, k, cells[idx(i, k)]);
  }
  refresh_mix(weights);
}

void LikelihoodMatrix::rescale_sigma(double sigma, std::span<const double> weights) {
  if (ssr_.empty()) {
    throw std::logic_error("rescale_sigma: matrix was built without residual sums");
  }
  if (!(sigma > 0.0)) {
    throw std::domain_error("rescale_sigma: sigma must be positive");
  }
  for (int i = 0; i < n_; ++i) {
    const double base = -obs_count_[i] * (std::log(sigma) + kHalfLog2Pi);
    for (int k = 0; k < K_; ++k) {
      const std::size_t at = idx(i, k);
      loglik_[at] = base - ssr_[at] / (2.0 * sigma * sigma);
      values_[at] = clamped_exp(loglik_[at]);
    }
  }
  refresh_mix(weights);
}

double LikelihoodMatrix::sigma_loglik_preview(double sigma, std::span<const double> weights) const {
  if (ssr_.empty()) {
    throw std::logic_error("sigma_loglik_preview: matrix was built without residual sums");
  }
  if (!(sigma > 0.0)) {
    throw std::domain_error("sigma_loglik_preview: sigma must be positive");
  }
  double total = 0.0;
  for (int i = 0; i < n_; ++i) {
    const double base = -obs_count_[i] * (std::log(sigma) + kHalfLog2Pi);
    double mix = 0.0;
    for (int k = 0; k < K_; ++k) {
      mix += weights[k] * clamped_exp(base - ssr_[idx(i, k)] / (2.0 * sigma * sigma));
    }
    if (mix <= 0.0) return kNegInf;
    total += std::log(mix);
  }
  return total;
}

std::vector<CellEval> evaluate_cells(const Model& model, std::span<const Subject> subjects,
                                     std::span<const SupportPoint> points,
                                     std::span<const double> beta, double sigma,
                                     WorkerPool& pool, EvalCounter* counter) {
  const std::int64_t n = static_cast<std::int64_t>(subjects.size());
  const std::int64_t K = static_cast<std::int64_t>(points.size());
  std::vector<CellEval> cells(static_cast<std::size_t>(n * K));
  pool.run_blocks(n * K, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t c = begin; c < end; ++c) {
      const std::int64_t i = c / K;
      const std::int64_t k = c % K;
      cells[c] = model.evaluate(subjects[i], points[k].coords, beta, sigma);
    }
  });
  if (counter) counter->add(static_cast<std::uint64_t>(n * K));
  return cells;
}

LikelihoodMatrix build_matrix(const Model& model, std::span<const Subject> subjects,
                              const Candidate& candidate, WorkerPool& pool,
                              EvalCounter* counter) {
  const int n = static_cast<int>(subjects.size());
  const int K = candidate.distribution.size();
  const bool keep_ssr = model.descriptor().error.kind == ErrorKind::kFixedScale;
  const std::vector<CellEval> cells = evaluate_cells(
      model, subjects, candidate.distribution.points, candidate.beta, candidate.sigma, pool,
      counter);
  LikelihoodMatrix matrix(n, K, keep_ssr);
  for (int i = 0; i < n; ++i) {
    matrix.set_obs_count(i, subjects[i].n_obs());
    for (int k = 0; k < K; ++k) {
      matrix.set_cell(i, k, cells[static_cast<std::size_t>(i) * K + k]);
    }
  }
  matrix.refresh_mix(candidate.distribution.weights);
  return matrix;
}

ObjectiveValue log_likelihood(const LikelihoodMatrix& matrix, std::span<const double> weights) {
  if (static_cast<int>(weights.size()) != matrix.cols()) {
    throw std::invalid_argument("log_likelihood: weight count does not match columns");
  }
  const int n = matrix.rows();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double mix = 0.0;
    for (int k = 0; k < matrix.cols(); ++k) mix += weights[k] * matrix.value(i, k);
    if (mix <= 0.0) return {kNegInf, std::numeric_limits<double>::infinity()};
    total += std::log(mix);
  }
  return {total, -total / n};
}

double loglik_with_column(const LikelihoodMatrix& matrix, std::span<const double> weights, int k,
                          std::span<const CellEval> column) {
  const int n = matrix.rows();
  const int K = matrix.cols();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double mix = 0.0;
    for (int j = 0; j < K; ++j) {
      const double v = j == k ? LikelihoodMatrix::clamped_exp(column[i].loglik)
                              : matrix.value(i, j);
      mix += weights[j] * v;
    }
    if (mix <= 0.0) return kNegInf;
    total += std::log(mix);
  }
  return total;
}

double loglik_of_cells(std::span<const CellEval> cells, int n, int K,
                       std::span<const double> weights) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double mix = 0.0;
    for (int k = 0; k < K; ++k) {
      mix += weights[k] * LikelihoodMatrix::clamped_exp(cells[static_cast<std::size_t>(i) * K + k].loglik);
    }
    if (mix <= 0.0) return kNegInf;
    total += std::log(mix);
  }
  return total;
}

std::vector<double> population_prediction(const Model& model, const Subject& subject,
                                          const Candidate& candidate) {
  const auto& dist = candidate.distribution;
  std::vector<double> mean(subject.times.size(), 0.0);
  for (int k = 0; k < dist.size(); ++k) {
    const std::vector<double> pred = model.predict(subject, dist.points[k].coords, candidate.beta);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += dist.weights[k] * pred[j];
  }
  return mean;
}

std::vector<double> individual_prediction(const Model& model, const Subject& subject,
                                          const Candidate& candidate) {
  const auto& dist = candidate.distribution;
  std::vector<double> post(subject.times.size(), 0.0);
  std::vector<double> cell_value(dist.size());
  double mix = 0.0;
  for (int k = 0; k < dist.size(); ++k) {
    const CellEval cell =
        model.evaluate(subject, dist.points[k].coords, candidate.beta, candidate.sigma);
    cell_value[k] = LikelihoodMatrix::clamped_exp(cell.loglik);
    mix += dist.weights[k] * cell_value[k];
  }
  if (mix <= 0.0) {
    throw std::runtime_error("individual_prediction: zero mixture likelihood for subject '" +
                             subject.id + "'");
  }
  for (int k = 0; k < dist.size(); ++k) {
    const double share = dist.weights[k] * cell_value[k] / mix;
    if (share == 0.0) continue;
    const std::vector<double> pred = model.predict(subject, dist.points[k].coords, candidate.beta);
    for (std::size_t j = 0; j < post.size(); ++j) post[j] += share * pred[j];
  }
  return post;
}

}  // namespace npmix
