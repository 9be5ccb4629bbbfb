#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fde/admm.hpp"
#include "fde/density.hpp"
#include "fde/network.hpp"

namespace fde {

enum class Criterion { AIC, BIC, CV };

const char* to_string(Criterion c);

/// Number of fused regions (segments and node values) of f.
std::size_t count_dof(const PiecewiseConstantFn& f, double relative_tolerance = 1e-6);

struct FoldScore {
  std::size_t fold = 0;
  bool evaluated = false;
  double lambda_min = 0.0;      // of the training set
  double held_out = 0.0;        // mean held-out log density
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct LambdaScore {
  double lambda = 0.0;
  bool evaluated = false;
  std::string note;             // why the entry was skipped, if it was
  double score = 0.0;           // IC value, or CV mean held-out log-likelihood
  std::size_t dof = 0;          // of the full-data fit
  double mean_log_likelihood = 0.0;  // full-data fit on its own sample
  bool converged = false;       // every fit behind this entry converged
  std::vector<FoldScore> folds; // CV only
};

struct SelectionReport {
  Criterion criterion = Criterion::BIC;
  std::vector<LambdaScore> entries;  // grid order
  std::optional<std::size_t> chosen;
  std::size_t n = 0;
  std::size_t folds = 0;
  std::uint64_t seed = 0;

  double chosen_lambda() const;  // throws InvalidInput when nothing was chosen
};

/// Minimizes AIC = -2n mll + 2 dof or BIC = -2n mll + dof log n over the
/// grid; ties go to the larger lambda. Infeasible entries are skipped and
/// noted. Throws InvalidInput on an empty grid, EmptyObservations.
SelectionReport ic_select(const GeometricNetwork& network, std::span<const NetworkPoint> points,
                          std::span<const double> grid, Criterion criterion,
                          const SolverSettings& settings = {});

/// K-fold cross-validation: a seeded shuffle, observation at shuffled
/// position i goes to fold i mod K. Folds whose training set makes lambda
/// infeasible are skipped. Chooses the largest mean held-out log-likelihood;
/// ties go to the larger lambda. Throws TooFewObservations unless
/// n >= folds >= 2.
SelectionReport cv_select(const GeometricNetwork& network, std::span<const NetworkPoint> points,
                          std::span<const double> grid, std::size_t folds = 20,
                          std::uint64_t seed = 0, const SolverSettings& settings = {},
                          unsigned threads = 1);

/// Deterministic fold of each observation (0 .. folds-1).
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Restricted MLE on the fused regions of f: region value = count / (n len).
/// Points on a region boundary or a node count toward the adjacent segment
/// of largest value in f. The result is flagged as a density.
PiecewiseConstantFn refit_mle(const PiecewiseConstantFn& f, std::span<const NetworkPoint> points);

/// count values spaced evenly in log between lo and hi, inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t count);

}  // namespace fde
