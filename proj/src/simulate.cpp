#include "fde/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fde/error.hpp"
#include "fde/parallel.hpp"
#include "fde/random.hpp"
#include "fde/solver.hpp"

namespace fde {

std::vector<NetworkPoint> sample(const PiecewiseConstantFn& f, std::size_t n, std::uint64_t seed) {
  const PiecewiseConstantFn density = f.is_density() ? f : f.as_density(1e-9);
  const auto& net = density.network();

  struct Piece {
    EdgeIndex edge;
    double lo;
    double hi;
  };
  std::vector<Piece> pieces;
  std::vector<double> cumulative;
  double total = 0.0;
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& piece = density.edge(e);
    for (std::size_t i = 0; i < piece.values.size(); ++i) {
      const auto [lo, hi] = segment_bounds(piece, net.length(e), i);
      const double mass = (hi - lo) * piece.values[i];
      if (mass <= 0.0) continue;
      total += mass;
      pieces.push_back({e, lo, hi});
      cumulative.push_back(total);
    }
  }

  std::vector<NetworkPoint> out;
  out.reserve(n);
  Rng rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const Piece& p = pieces[static_cast<std::size_t>(it - cumulative.begin())];
    out.push_back({p.edge, p.lo + rng.uniform() * (p.hi - p.lo)});
  }
  return out;
}

double PowerLambdaRule::operator()(std::size_t n) const {
  return scale * std::pow(static_cast<double>(n) / reference_n, exponent);
}

std::string PowerLambdaRule::describe() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6g*(n/%.6g)^%.6g", scale, reference_n, exponent);
  return buf;
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "slope needs at least two points");
  }
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error(ErrorCode::InvalidInput, "slope needs two distinct abscissae");
  return sxy / sxx;
}

RateReport rate_experiment(const PiecewiseConstantFn& truth, std::span<const std::size_t> n_grid,
                           std::size_t reps, const PowerLambdaRule& rule, std::uint64_t seed,
                           const SolverSettings& settings, unsigned threads) {
  if (n_grid.empty() || reps == 0) throw Error(ErrorCode::InvalidInput, "empty rate experiment");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] == 0 || (i > 0 && n_grid[i] <= n_grid[i - 1])) {
      throw Error(ErrorCode::InvalidInput, "sample sizes must be positive and strictly increasing");
    }
  }
  const PiecewiseConstantFn f0 = truth.is_density() ? truth : truth.as_density(1e-9);

  RateReport report;
  report.reps = reps;
  report.seed = seed;
  report.lambda_rule = rule.describe();
  report.rows.resize(n_grid.size());
  std::vector<char> converged(n_grid.size() * reps, 1);
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    report.rows[i].n = n_grid[i];
    report.rows[i].lambda = rule(n_grid[i]);
    report.rows[i].h2.assign(reps, 0.0);
  }

  parallel_for(n_grid.size() * reps, threads, [&](std::size_t item) {
    const std::size_t i = item / reps;
    const std::size_t r = item % reps;
    const auto points = sample(f0, n_grid[i], seed_for(seed, item));
    const FitResult fitted = fit(f0.network(), points, report.rows[i].lambda, settings);
    report.rows[i].h2[r] = hellinger_sq(fitted.estimate, f0);
    converged[item] = fitted.solution.converged() ? 1 : 0;
  });

  std::vector<double> log_n, log_h2;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    auto& row = report.rows[i];
    double sum = 0.0;
    for (double v : row.h2) sum += v;
    row.mean_h2 = sum / static_cast<double>(reps);
    if (reps > 1) {
      double ss = 0.0;
      for (double v : row.h2) ss += (v - row.mean_h2) * (v - row.mean_h2);
      row.std_h2 = std::sqrt(ss / static_cast<double>(reps - 1));
    }
    for (std::size_t r = 0; r < reps; ++r) row.unconverged += converged[i * reps + r] ? 0 : 1;
    log_n.push_back(std::log(static_cast<double>(row.n)));
    log_h2.push_back(std::log(row.mean_h2));
  }
  if (n_grid.size() >= 2) {
    report.has_slope = true;
    report.slope = least_squares_slope(log_n, log_h2);
  }
  return report;
}

}  // namespace fde
