#pragma once

#include <cstddef>
#include <vector>

namespace csihar {

// Per-class correct counts followed by per-class error counts, flattened
// from a confusion matrix.
struct CountVector {
  std::vector<long long> counts;
};

// Dirichlet prior over the 2K outcome probabilities. Correct cells share
// u_correct, error cells the much smaller u_error.
struct DirichletPrior {
  double u_correct = 1.0;
  double u_error = 0.01;
  std::size_t classes = 7;
};

// Flattens a square confusion matrix into diagonal counts followed by
// per-row off-diagonal sums.
CountVector counts_from_confusion(
    const std::vector<std::vector<long long>>& matrix);

// Log normalization constant of a Dirichlet with parameters u: the sum of
// lgamma(u_i) minus lgamma of the sum. All parameters must be positive.
double log_dirichlet_norm(const std::vector<double>& u);

// Log Bayes factor comparing "two independent multinomials" against "one
// shared multinomial" for two flattened confusion counts. Positive values
// are evidence that the classifiers perform differently, negative values
// that they share a profile. Symmetric in its two count arguments.
double log_bayes_factor(const CountVector& a, const CountVector& b,
                        const DirichletPrior& prior);

}  // namespace csihar
