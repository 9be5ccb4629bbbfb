#pragma once

#include <Eigen/Sparse>

#include <span>
#include <vector>

#include "fde/density.hpp"
#include "fde/network.hpp"

namespace fde {

/// Deduplicated sample. Interior locations per edge are strictly increasing
/// with multiplicities; points at an edge end count toward that node.
struct ObservationSet {
  struct EdgeObservations {
    std::vector<double> locations;
    std::vector<std::size_t> counts;
  };

  std::vector<EdgeObservations> edges;
  std::vector<std::size_t> node_counts;
  std::size_t n = 0;
};

/// Merges points with identical (edge, offset). With merge_eps > 0 offsets
/// are first snapped to the grid eps * k, and points within eps / 2 of an
/// edge end are moved onto the node. Throws EmptyObservations,
/// PointOffNetwork.
ObservationSet build_observations(const GeometricNetwork& network,
                                  std::span<const NetworkPoint> points,
                                  double merge_eps = 0.0);

/// max over observed locations of q / (n * deg); the estimator exists iff
/// lambda is strictly larger.
double lambda_min(const ObservationSet& obs, const GeometricNetwork& network);

/// Strict-inequality margin enforced by build_qp.
inline constexpr double kLambdaGuard = 1e-12;

enum class RowKind { Difference, NodeIncidence };

/// Provenance of one penalty row. Difference rows couple segments
/// `position` and `position + 1` of `edge`; node rows couple node `node` with
/// the segment at `end`.
struct RowInfo {
  RowKind kind = RowKind::Difference;
  EdgeIndex edge = kNoIndex;
  std::size_t position = 0;
  NodeIndex node = kNoIndex;
  EdgeEnd end{};
};

/// The penalized QP
///   min_{z,h} 1/2 z'Sz + w'z + u'h + ||D1 z + D2 h||_1
/// with S = diag(s).
struct QpProblem {
  GeometricNetwork network;
  ObservationSet observations;
  double lambda = 0.0;

  Eigen::VectorXd s;  // segment lengths
  Eigen::VectorXd w;  // -qbar / n over segments
  Eigen::VectorXd u;  // -r / n over nodes
  Eigen::SparseMatrix<double> D1;  // rows x segments
  Eigen::SparseMatrix<double> D2;  // rows x nodes
  std::vector<RowInfo> rows;
  std::size_t difference_rows = 0;

  std::vector<std::size_t> edge_first_segment;  // edge_count + 1 entries

  std::size_t segment_count() const { return static_cast<std::size_t>(s.size()); }
  std::size_t row_count() const { return rows.size(); }
  std::size_t segment(EdgeIndex e, std::size_t i) const { return edge_first_segment[e] + i; }
  std::size_t segment_at(EdgeEnd end) const {
    return end.at_end ? edge_first_segment[end.edge + 1] - 1 : edge_first_segment[end.edge];
  }

  /// Primal objective at (z, h).
  double primal_objective(const Eigen::VectorXd& z, const Eigen::VectorXd& h) const;

  /// Function with breakpoints at the interior locations, segment values z
  /// and node values h. Not flagged as a density.
  PiecewiseConstantFn to_function(const Eigen::VectorXd& z, const Eigen::VectorXd& h) const;
};

/// Throws LambdaTooSmall (carrying lambda_min) unless
/// lambda >= lambda_min + kLambdaGuard.
QpProblem build_qp(const GeometricNetwork& network, const ObservationSet& obs, double lambda);

}  // namespace fde
