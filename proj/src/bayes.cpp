#include "csihar/bayes.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace csihar {
namespace {

std::vector<double> prior_vector(const DirichletPrior& prior) {
  if (prior.classes == 0) {
    throw std::invalid_argument("prior needs at least one class");
  }
  if (!(prior.u_correct > 0.0) || !(prior.u_error > 0.0)) {
    throw std::invalid_argument("prior concentrations must be positive");
  }
  if (prior.u_error > prior.u_correct) {
    throw std::invalid_argument("u_error must not exceed u_correct");
  }
  std::vector<double> u(2 * prior.classes);
  for (std::size_t i = 0; i < prior.classes; ++i) {
    u[i] = prior.u_correct;
    u[prior.classes + i] = prior.u_error;
  }
  return u;
}

void check_counts(const CountVector& v, std::size_t expected,
                  const char* name) {
  if (v.counts.size() != expected) {
    throw std::invalid_argument(std::string(name) + " has " +
                                std::to_string(v.counts.size()) +
                                " counts, expected " +
                                std::to_string(expected));
  }
  for (long long c : v.counts) {
    if (c < 0) {
      throw std::invalid_argument(std::string(name) +
                                  " holds a negative count");
    }
  }
}

}  // namespace

CountVector counts_from_confusion(
    const std::vector<std::vector<long long>>& matrix) {
  const std::size_t k = matrix.size();
  CountVector out;
  out.counts.assign(2 * k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (matrix[i].size() != k) {
      throw std::invalid_argument(
          "confusion matrix must be square: row " + std::to_string(i) +
          " has " + std::to_string(matrix[i].size()) + " entries, expected " +
          std::to_string(k));
    }
    long long errors = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (matrix[i][j] < 0) {
        throw std::invalid_argument("confusion matrix holds a negative count");
      }
      if (j == i) {
        out.counts[i] = matrix[i][j];
      } else {
        errors += matrix[i][j];
      }
    }
    out.counts[k + i] = errors;
  }
  return out;
}

double log_dirichlet_norm(const std::vector<double>& u) {
  if (u.empty()) {
    throw std::invalid_argument(
        "log_dirichlet_norm needs at least one parameter");
  }
  double total = 0.0;
  double sum = 0.0;
  for (double x : u) {
    if (!(x > 0.0)) {
      throw std::invalid_argument("Dirichlet parameters must be positive");
    }
    total += std::lgamma(x);
    sum += x;
  }
  return total - std::lgamma(sum);
}

double log_bayes_factor(const CountVector& a, const CountVector& b,
                        const DirichletPrior& prior) {
  const auto u = prior_vector(prior);
  check_counts(a, u.size(), "classifier A");
  check_counts(b, u.size(), "classifier B");
  std::vector<double> ua(u.size());
  std::vector<double> ub(u.size());
  std::vector<double> uab(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    ua[i] = u[i] + static_cast<double>(a.counts[i]);
    ub[i] = u[i] + static_cast<double>(b.counts[i]);
    // The pooled counts are summed as integers first, so swapping the two
    // classifiers cannot change a single bit of the result.
    uab[i] = u[i] + static_cast<double>(a.counts[i] + b.counts[i]);
  }
  return log_dirichlet_norm(ua) + log_dirichlet_norm(ub) -
         log_dirichlet_norm(u) - log_dirichlet_norm(uab);
}

}  // namespace csihar
