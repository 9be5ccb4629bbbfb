#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fde/admm.hpp"
#include "fde/density.hpp"

namespace fde {

/// n i.i.d. points: a segment with probability length * value, then a
/// uniform offset inside it. Throws NotADensity unless f is nonnegative
/// and integrates to one within 1e-9.
std::vector<NetworkPoint> sample(const PiecewiseConstantFn& f, std::size_t n, std::uint64_t seed);

/// lambda(n) = scale * (n / reference_n)^exponent.
struct PowerLambdaRule {
  double scale = 0.05;
  double reference_n = 100.0;
  double exponent = -2.0 / 3.0;

  double operator()(std::size_t n) const;
  std::string describe() const;
};

struct RateRow {
  std::size_t n = 0;
  double lambda = 0.0;
  std::vector<double> h2;  // one per replication
  double mean_h2 = 0.0;
  double std_h2 = 0.0;     // sample standard deviation, 0 for one replication
  std::size_t unconverged = 0;
};

struct RateReport {
  std::vector<RateRow> rows;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::string lambda_rule;
  bool has_slope = false;  // needs at least two sizes
  double slope = 0.0;      // least squares of log mean h2 on log n
};

/// Replication r at size index i samples with seed_for(seed, i * reps + r).
/// Throws InvalidInput unless n_grid is strictly increasing and reps >= 1.
RateReport rate_experiment(const PiecewiseConstantFn& truth, std::span<const std::size_t> n_grid,
                           std::size_t reps, const PowerLambdaRule& rule, std::uint64_t seed,
                           const SolverSettings& settings = {}, unsigned threads = 1);

/// Least-squares slope of y on x. Needs two distinct x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

}  // namespace fde
