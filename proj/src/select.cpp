#include "fde/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "fde/assemble.hpp"
#include "fde/error.hpp"
#include "fde/parallel.hpp"
#include "fde/random.hpp"
#include "fde/solver.hpp"

namespace fde {

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::AIC: return "aic";
    case Criterion::BIC: return "bic";
    case Criterion::CV: return "cv";
  }
  return "?";
}

std::size_t count_dof(const PiecewiseConstantFn& f, double relative_tolerance) {
  return fused_partition(f, relative_tolerance).region_count;
}

double SelectionReport::chosen_lambda() const {
  if (!chosen) throw Error(ErrorCode::InvalidInput, "no feasible lambda on the grid");
  return entries[*chosen].lambda;
}

namespace {

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorCode::InvalidInput, "lambda grid is empty");
  for (double l : grid) {
    if (!std::isfinite(l) || l <= 0.0) throw Error(ErrorCode::InvalidInput, "lambda grid entries must be positive");
  }
}

// Best entry by `better(a, b)`, ties broken toward the larger lambda.
template <typename Better>
std::optional<std::size_t> pick(const std::vector<LambdaScore>& entries, Better better) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!e.evaluated) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = entries[*best];
    if (better(e.score, b.score) || (e.score == b.score && e.lambda > b.lambda)) best = i;
  }
  return best;
}

std::string infeasible_note(const LambdaTooSmall& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "infeasible: threshold %.12g", e.threshold());
  return buf;
}

}  // namespace

SelectionReport ic_select(const GeometricNetwork& network, std::span<const NetworkPoint> points,
                          std::span<const double> grid, Criterion criterion,
                          const SolverSettings& settings) {
  check_grid(grid);
  if (criterion == Criterion::CV) throw Error(ErrorCode::InvalidInput, "ic_select needs AIC or BIC");
  const ObservationSet obs = build_observations(network, points);
  const double n = static_cast<double>(points.size());

  SelectionReport report;
  report.criterion = criterion;
  report.n = points.size();
  for (double lambda : grid) {
    LambdaScore entry;
    entry.lambda = lambda;
    try {
      const FitResult r = fit(network, obs, lambda, settings);
      entry.evaluated = true;
      entry.converged = r.solution.converged();
      entry.dof = count_dof(r.estimate);
      entry.mean_log_likelihood = mean_log_likelihood(r.estimate, points);
      const double penalty = criterion == Criterion::AIC ? 2.0 * static_cast<double>(entry.dof)
                                                         : static_cast<double>(entry.dof) * std::log(n);
      entry.score = -2.0 * n * entry.mean_log_likelihood + penalty;
    } catch (const LambdaTooSmall& e) {
      entry.note = infeasible_note(e);
    }
    report.entries.push_back(std::move(entry));
  }
  report.chosen = pick(report.entries, [](double a, double b) { return a < b; });
  return report;
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed_for(seed, 0));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::size_t> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % folds;
  return fold;
}

SelectionReport cv_select(const GeometricNetwork& network, std::span<const NetworkPoint> points,
                          std::span<const double> grid, std::size_t folds, std::uint64_t seed,
                          const SolverSettings& settings, unsigned threads) {
  check_grid(grid);
  if (folds < 2 || points.size() < folds) {
    throw Error(ErrorCode::TooFewObservations, "cross-validation needs n >= folds >= 2");
  }
  validate(network);
  for (const auto& p : points) check_point(network, p);

  const auto assignment = fold_assignment(points.size(), folds, seed);
  std::vector<std::vector<NetworkPoint>> train(folds), test(folds);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t k = 0; k < folds; ++k) {
      (assignment[i] == k ? test[k] : train[k]).push_back(points[i]);
    }
  }
  std::vector<ObservationSet> train_obs;
  std::vector<double> train_min;
  for (std::size_t k = 0; k < folds; ++k) {
    train_obs.push_back(build_observations(network, train[k]));
    train_min.push_back(lambda_min(train_obs.back(), network));
  }
  const ObservationSet full = build_observations(network, points);

  SelectionReport report;
  report.criterion = Criterion::CV;
  report.n = points.size();
  report.folds = folds;
  report.seed = seed;
  report.entries.resize(grid.size());

  // One work item per (lambda, fold) plus one full-data fit per lambda.
  const std::size_t per_lambda = folds + 1;
  std::vector<FoldScore> fold_scores(grid.size() * folds);
  std::vector<char> fold_converged(grid.size() * folds, 1);
  parallel_for(grid.size() * per_lambda, threads, [&](std::size_t item) {
    const std::size_t g = item / per_lambda;
    const std::size_t k = item % per_lambda;
    const double lambda = grid[g];
    if (k == folds) {
      auto& entry = report.entries[g];
      entry.lambda = lambda;
      try {
        const FitResult r = fit(network, full, lambda, settings);
        entry.dof = count_dof(r.estimate);
        entry.mean_log_likelihood = mean_log_likelihood(r.estimate, points);
        entry.converged = r.solution.converged();
      } catch (const LambdaTooSmall& e) {
        entry.note = infeasible_note(e);
      }
      return;
    }
    FoldScore& fs = fold_scores[g * folds + k];
    fs.fold = k;
    fs.lambda_min = train_min[k];
    fs.train_size = train[k].size();
    fs.test_size = test[k].size();
    if (lambda < train_min[k] + kLambdaGuard) return;
    const FitResult r = fit(network, train_obs[k], lambda, settings);
    fs.evaluated = true;
    fs.held_out = mean_log_likelihood(r.estimate, test[k]);
    fold_converged[g * folds + k] = r.solution.converged() ? 1 : 0;
  });

  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto& entry = report.entries[g];
    double sum = 0.0;
    std::size_t used = 0;
    bool converged = entry.note.empty() ? entry.converged : true;
    for (std::size_t k = 0; k < folds; ++k) {
      const FoldScore& fs = fold_scores[g * folds + k];
      entry.folds.push_back(fs);
      if (!fs.evaluated) continue;
      sum += fs.held_out;
      ++used;
      converged = converged && fold_converged[g * folds + k];
    }
    entry.converged = converged;
    if (used == 0) {
      if (entry.note.empty()) entry.note = "infeasible on every fold";
      continue;
    }
    entry.evaluated = true;
    entry.score = sum / static_cast<double>(used);
    if (used < folds) {
      entry.note = std::to_string(folds - used) + " of " + std::to_string(folds) + " folds infeasible";
    }
  }
  report.chosen = pick(report.entries, [](double a, double b) { return a > b; });
  return report;
}

PiecewiseConstantFn refit_mle(const PiecewiseConstantFn& f, std::span<const NetworkPoint> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyObservations, "no observations to refit");
  const auto& net = f.network();
  const FusedPartition part = fused_partition(f);

  std::vector<double> length(part.region_count, 0.0);
  std::vector<double> count(part.region_count, 0.0);
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& piece = f.edge(e);
    for (std::size_t i = 0; i < piece.values.size(); ++i) {
      const auto [lo, hi] = segment_bounds(piece, net.length(e), i);
      length[part.segment_region[e][i]] += hi - lo;
    }
  }

  for (const auto& p : points) {
    check_point(net, p);
    const auto& piece = f.edge(p.edge);
    const double len = net.length(p.edge);
    std::size_t region = kNoIndex;
    if (p.offset == 0.0 || p.offset == len) {
      const NodeIndex v = p.offset == 0.0 ? net.edge(p.edge).u : net.edge(p.edge).v;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& end : net.incident(v)) {
        const std::size_t i = end.at_end ? f.edge(end.edge).values.size() - 1 : 0;
        const double value = f.end_value(end);
        if (value > best) {
          best = value;
          region = part.segment_region[end.edge][i];
        }
      }
    } else {
      const auto& bp = piece.breakpoints;
      const auto it = std::lower_bound(bp.begin(), bp.end(), p.offset);
      auto i = static_cast<std::size_t>(it - bp.begin());
      if (it != bp.end() && *it == p.offset && piece.values[i + 1] > piece.values[i]) ++i;
      region = part.segment_region[p.edge][i];
    }
    count[region] += 1.0;
  }

  const double n = static_cast<double>(points.size());
  std::vector<double> value(part.region_count, 0.0);
  for (std::size_t r = 0; r < part.region_count; ++r) {
    if (length[r] > 0.0) value[r] = count[r] / (n * length[r]);
  }

  std::vector<EdgePieces> edges(net.edge_count());
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    edges[e].breakpoints = f.edge(e).breakpoints;
    for (std::size_t r : part.segment_region[e]) edges[e].values.push_back(value[r]);
  }
  std::vector<double> nodes(net.node_count());
  for (NodeIndex v = 0; v < net.node_count(); ++v) {
    const std::size_t r = part.node_region[v];
    if (length[r] > 0.0) {
      nodes[v] = value[r];
      continue;
    }
    // A node region of its own has no mass; use the largest adjacent value so
    // that point evaluation at the node is unchanged.
    double best = 0.0;
    for (const auto& end : net.incident(v)) {
      const std::size_t i = end.at_end ? edges[end.edge].values.size() - 1 : 0;
      best = std::max(best, edges[end.edge].values[i]);
    }
    nodes[v] = best;
  }
  return PiecewiseConstantFn(net, std::move(edges), std::move(nodes)).as_density(1e-9);
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0) {
    throw Error(ErrorCode::InvalidInput, "log grid needs 0 < lo <= hi and count >= 1");
  }
  std::vector<double> out;
  if (count == 1) return {lo};
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(lo * std::exp(step * static_cast<double>(i)));
  out.back() = hi;
  return out;
}

}  // namespace fde
