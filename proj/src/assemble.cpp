#include "fde/assemble.hpp"

#include <algorithm>
#include <cmath>

#include "fde/error.hpp"

namespace fde {

ObservationSet build_observations(const GeometricNetwork& network,
                                  std::span<const NetworkPoint> points, double merge_eps) {
  if (points.empty()) throw Error(ErrorCode::EmptyObservations, "no observations");

  ObservationSet obs;
  obs.edges.resize(network.edge_count());
  obs.node_counts.assign(network.node_count(), 0);
  obs.n = points.size();

  std::vector<std::vector<double>> interior(network.edge_count());
  for (const auto& p : points) {
    check_point(network, p);
    const auto& edge = network.edge(p.edge);
    double t = p.offset;
    if (merge_eps > 0.0) {
      if (t <= 0.5 * merge_eps) {
        t = 0.0;
      } else if (t >= edge.length - 0.5 * merge_eps) {
        t = edge.length;
      } else {
        t = std::clamp(std::round(t / merge_eps) * merge_eps, 0.0, edge.length);
      }
    }
    if (t == 0.0) {
      ++obs.node_counts[edge.u];
    } else if (t == edge.length) {
      ++obs.node_counts[edge.v];
    } else {
      interior[p.edge].push_back(t);
    }
  }

  for (EdgeIndex e = 0; e < network.edge_count(); ++e) {
    auto& offsets = interior[e];
    std::sort(offsets.begin(), offsets.end());
    auto& out = obs.edges[e];
    for (double t : offsets) {
      if (!out.locations.empty() && out.locations.back() == t) {
        ++out.counts.back();
      } else {
        out.locations.push_back(t);
        out.counts.push_back(1);
      }
    }
  }
  return obs;
}

double lambda_min(const ObservationSet& obs, const GeometricNetwork& network) {
  const double n = static_cast<double>(obs.n);
  double threshold = 0.0;
  for (const auto& edge : obs.edges) {
    for (std::size_t q : edge.counts) {
      threshold = std::max(threshold, static_cast<double>(q) / (n * 2.0));
    }
  }
  for (NodeIndex v = 0; v < obs.node_counts.size(); ++v) {
    if (obs.node_counts[v] == 0) continue;
    const double deg = static_cast<double>(network.degree(v));
    threshold = std::max(threshold, static_cast<double>(obs.node_counts[v]) / (n * deg));
  }
  return threshold;
}

QpProblem build_qp(const GeometricNetwork& network, const ObservationSet& obs, double lambda) {
  validate(network);
  if (obs.edges.size() != network.edge_count() ||
      obs.node_counts.size() != network.node_count() || obs.n == 0) {
    throw Error(ErrorCode::InvalidInput, "observation set does not match the network");
  }
  const double threshold = lambda_min(obs, network);
  if (!std::isfinite(lambda) || lambda < threshold + kLambdaGuard) {
    throw LambdaTooSmall(lambda, threshold);
  }

  QpProblem qp;
  qp.network = network;
  qp.observations = obs;
  qp.lambda = lambda;

  const std::size_t ne = network.edge_count();
  const std::size_t nv = network.node_count();
  const double n = static_cast<double>(obs.n);

  qp.edge_first_segment.assign(ne + 1, 0);
  for (EdgeIndex e = 0; e < ne; ++e) {
    qp.edge_first_segment[e + 1] = qp.edge_first_segment[e] + obs.edges[e].locations.size() + 1;
  }
  const std::size_t segments = qp.edge_first_segment.back();

  qp.s.resize(static_cast<Eigen::Index>(segments));
  qp.w.resize(static_cast<Eigen::Index>(segments));
  for (EdgeIndex e = 0; e < ne; ++e) {
    const auto& loc = obs.edges[e].locations;
    const auto& cnt = obs.edges[e].counts;
    const double len = network.length(e);
    for (std::size_t i = 0; i <= loc.size(); ++i) {
      const double lo = i == 0 ? 0.0 : loc[i - 1];
      const double hi = i == loc.size() ? len : loc[i];
      const double q_left = i == 0 ? 0.0 : static_cast<double>(cnt[i - 1]);
      const double q_right = i == loc.size() ? 0.0 : static_cast<double>(cnt[i]);
      const auto k = static_cast<Eigen::Index>(qp.segment(e, i));
      qp.s[k] = hi - lo;
      qp.w[k] = -0.5 * (q_left + q_right) / n;
    }
  }
  qp.u.resize(static_cast<Eigen::Index>(nv));
  for (NodeIndex v = 0; v < nv; ++v) {
    qp.u[static_cast<Eigen::Index>(v)] = -static_cast<double>(obs.node_counts[v]) / n;
  }

  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> t1;
  std::vector<Triplet> t2;
  std::size_t row = 0;
  for (EdgeIndex e = 0; e < ne; ++e) {
    const auto& cnt = obs.edges[e].counts;
    for (std::size_t i = 0; i < cnt.size(); ++i, ++row) {
      const double weight = lambda - static_cast<double>(cnt[i]) / (2.0 * n);
      const auto r = static_cast<int>(row);
      t1.emplace_back(r, static_cast<int>(qp.segment(e, i)), weight);
      t1.emplace_back(r, static_cast<int>(qp.segment(e, i + 1)), -weight);
      qp.rows.push_back({RowKind::Difference, e, i, kNoIndex, {}});
    }
  }
  qp.difference_rows = row;
  for (NodeIndex v = 0; v < nv; ++v) {
    for (const auto& end : network.incident(v)) {
      const auto r = static_cast<int>(row++);
      t1.emplace_back(r, static_cast<int>(qp.segment_at(end)), lambda);
      t2.emplace_back(r, static_cast<int>(v), -lambda);
      qp.rows.push_back({RowKind::NodeIncidence, end.edge, end.at_end ? obs.edges[end.edge].locations.size() : 0,
                         v, end});
    }
  }
  const auto rows = static_cast<Eigen::Index>(row);
  qp.D1.resize(rows, static_cast<Eigen::Index>(segments));
  qp.D1.setFromTriplets(t1.begin(), t1.end());
  qp.D2.resize(rows, static_cast<Eigen::Index>(nv));
  qp.D2.setFromTriplets(t2.begin(), t2.end());
  return qp;
}

double QpProblem::primal_objective(const Eigen::VectorXd& z, const Eigen::VectorXd& h) const {
  const Eigen::VectorXd penalty = D1 * z + D2 * h;
  return 0.5 * z.dot(s.cwiseProduct(z)) + w.dot(z) + u.dot(h) + penalty.lpNorm<1>();
}

PiecewiseConstantFn QpProblem::to_function(const Eigen::VectorXd& z,
                                           const Eigen::VectorXd& h) const {
  std::vector<EdgePieces> edges(network.edge_count());
  for (EdgeIndex e = 0; e < network.edge_count(); ++e) {
    edges[e].breakpoints = observations.edges[e].locations;
    for (std::size_t k = edge_first_segment[e]; k < edge_first_segment[e + 1]; ++k) {
      edges[e].values.push_back(z[static_cast<Eigen::Index>(k)]);
    }
  }
  std::vector<double> nodes(h.data(), h.data() + h.size());
  return PiecewiseConstantFn(network, std::move(edges), std::move(nodes));
}

}  // namespace fde
