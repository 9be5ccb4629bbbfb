#pragma once

#include <span>
#include <utility>
#include <vector>

#include "fde/network.hpp"

namespace fde {

/// Values on one edge: `values[i]` holds on the open segment between
/// breakpoints i-1 and i (edge ends act as breakpoints -1 and size()).
struct EdgePieces {
  std::vector<double> breakpoints;
  std::vector<double> values;

  friend bool operator==(const EdgePieces&, const EdgePieces&) = default;
};

/// [lo, hi] offsets of segment i of an edge of the given length.
std::pair<double, double> segment_bounds(const EdgePieces& piece, double edge_length,
                                         std::size_t i);

/// Piecewise-constant function on a geometric network, with one value per
/// open segment and one value per node.
class PiecewiseConstantFn {
 public:
  /// Throws InvalidInput when the shape does not match the network, when
  /// breakpoints are not strictly increasing inside (0, length), or when a
  /// value is not finite.
  PiecewiseConstantFn(GeometricNetwork network, std::vector<EdgePieces> edges,
                      std::vector<double> node_values);

  static PiecewiseConstantFn constant(GeometricNetwork network, double value);

  const GeometricNetwork& network() const noexcept { return network_; }
  std::span<const EdgePieces> edges() const noexcept { return edges_; }
  const EdgePieces& edge(EdgeIndex e) const { return edges_.at(e); }
  std::span<const double> node_values() const noexcept { return node_values_; }
  double node_value(NodeIndex v) const { return node_values_.at(v); }

  /// Value of the segment touching the given edge end.
  double end_value(EdgeEnd end) const;

  bool is_density() const noexcept { return density_; }

  /// Copy flagged as a density. Throws NotADensity unless every value is
  /// nonnegative and the integral is 1 within `tolerance`.
  PiecewiseConstantFn as_density(double tolerance = 1e-9) const;

  /// Same breakpoints, each value replaced by op(value). Drops the flag.
  template <typename Op>
  PiecewiseConstantFn map_values(Op op) const {
    auto edges = edges_;
    for (auto& piece : edges) {
      for (auto& v : piece.values) v = op(v);
    }
    auto nodes = node_values_;
    for (auto& v : nodes) v = op(v);
    return PiecewiseConstantFn(network_, std::move(edges), std::move(nodes));
  }

  friend bool operator==(const PiecewiseConstantFn& a, const PiecewiseConstantFn& b) {
    return a.network_ == b.network_ && a.edges_ == b.edges_ &&
           a.node_values_ == b.node_values_ && a.density_ == b.density_;
  }

 private:
  GeometricNetwork network_;
  std::vector<EdgePieces> edges_;
  std::vector<double> node_values_;
  bool density_ = false;
};

/// Clamp applied to evaluated densities before taking logs.
inline constexpr double kLogLikelihoodFloor = 1e-300;

double integrate(const PiecewiseConstantFn& f);

/// Interior jumps plus |node value - adjacent segment value| over every edge end.
double tv(const PiecewiseConstantFn& f);

/// tv of the value-wise logarithm. Throws NonpositiveValue.
double log_tv(const PiecewiseConstantFn& f);

/// Squared Hellinger distance, exact on the common refinement.
/// Throws NetworkMismatch, or NotADensity on negative values.
double hellinger_sq(const PiecewiseConstantFn& f, const PiecewiseConstantFn& g);

/// Segment value inside a segment; max of both neighbours at a breakpoint;
/// max of the node value and all incident segment values at a node.
double evaluate(const PiecewiseConstantFn& f, const NetworkPoint& p);

/// (1/n) sum log max(evaluate(f, x_i), kLogLikelihoodFloor).
/// Throws EmptyObservations.
double mean_log_likelihood(const PiecewiseConstantFn& f,
                           std::span<const NetworkPoint> observations);

/// Both functions re-expressed on the union of their breakpoints.
std::pair<PiecewiseConstantFn, PiecewiseConstantFn> common_refinement(
    const PiecewiseConstantFn& f, const PiecewiseConstantFn& g);

/// Connected regions of equal value. Segments adjacent across a breakpoint,
/// and a node with each segment touching it, are merged when their values
/// agree within `relative_tolerance`.
struct FusedPartition {
  std::vector<std::vector<std::size_t>> segment_region;  // [edge][segment]
  std::vector<std::size_t> node_region;                  // [node]
  std::size_t region_count = 0;
};

FusedPartition fused_partition(const PiecewiseConstantFn& f,
                               double relative_tolerance = 1e-6);

bool values_agree(double a, double b, double relative_tolerance);

}  // namespace fde
