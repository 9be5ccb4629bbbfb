#include "fde/density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fde/error.hpp"

namespace fde {

namespace {

void require_same_network(const PiecewiseConstantFn& f, const PiecewiseConstantFn& g) {
  if (!(f.network() == g.network())) {
    throw Error(ErrorCode::NetworkMismatch, "functions live on different networks");
  }
}

// Index of the segment containing an interior offset that is not a breakpoint.
std::size_t segment_at(const EdgePieces& piece, double offset) {
  return static_cast<std::size_t>(
      std::upper_bound(piece.breakpoints.begin(), piece.breakpoints.end(), offset) -
      piece.breakpoints.begin());
}

double segment_length(const EdgePieces& piece, double edge_length, std::size_t i) {
  const auto [lo, hi] = segment_bounds(piece, edge_length, i);
  return hi - lo;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::pair<double, double> segment_bounds(const EdgePieces& piece, double edge_length,
                                         std::size_t i) {
  const double lo = i == 0 ? 0.0 : piece.breakpoints[i - 1];
  const double hi = i == piece.breakpoints.size() ? edge_length : piece.breakpoints[i];
  return {lo, hi};
}

PiecewiseConstantFn::PiecewiseConstantFn(GeometricNetwork network,
                                         std::vector<EdgePieces> edges,
                                         std::vector<double> node_values)
    : network_(std::move(network)),
      edges_(std::move(edges)),
      node_values_(std::move(node_values)) {
  if (edges_.size() != network_.edge_count() ||
      node_values_.size() != network_.node_count()) {
    throw Error(ErrorCode::InvalidInput, "function shape does not match its network");
  }
  for (EdgeIndex e = 0; e < edges_.size(); ++e) {
    const auto& piece = edges_[e];
    const double len = network_.length(e);
    const auto& id = network_.edge(e).id;
    if (piece.values.size() != piece.breakpoints.size() + 1) {
      throw Error(ErrorCode::InvalidInput,
                  "edge '" + id + "' needs one value per segment");
    }
    double previous = 0.0;
    for (double b : piece.breakpoints) {
      if (!(b > previous) || !(b < len)) {
        throw Error(ErrorCode::InvalidInput,
                    "edge '" + id + "' breakpoints must increase strictly inside the edge");
      }
      previous = b;
    }
    for (double v : piece.values) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::InvalidInput, "edge '" + id + "' has a non-finite value");
      }
    }
  }
  for (double v : node_values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidInput, "non-finite node value");
  }
}

PiecewiseConstantFn PiecewiseConstantFn::constant(GeometricNetwork network, double value) {
  std::vector<EdgePieces> edges(network.edge_count(), EdgePieces{{}, {value}});
  std::vector<double> nodes(network.node_count(), value);
  return PiecewiseConstantFn(std::move(network), std::move(edges), std::move(nodes));
}

double PiecewiseConstantFn::end_value(EdgeEnd end) const {
  const auto& values = edges_.at(end.edge).values;
  return end.at_end ? values.back() : values.front();
}

PiecewiseConstantFn PiecewiseConstantFn::as_density(double tolerance) const {
  auto negative = [](double v) { return v < 0.0; };
  for (const auto& piece : edges_) {
    if (std::any_of(piece.values.begin(), piece.values.end(), negative)) {
      throw Error(ErrorCode::NotADensity, "density has a negative segment value");
    }
  }
  if (std::any_of(node_values_.begin(), node_values_.end(), negative)) {
    throw Error(ErrorCode::NotADensity, "density has a negative node value");
  }
  const double mass = integrate(*this);
  if (!(std::abs(mass - 1.0) <= tolerance)) {
    throw Error(ErrorCode::NotADensity, "density does not integrate to one");
  }
  PiecewiseConstantFn copy = *this;
  copy.density_ = true;
  return copy;
}

double integrate(const PiecewiseConstantFn& f) {
  double sum = 0.0;
  const auto& net = f.network();
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& piece = f.edge(e);
    for (std::size_t i = 0; i < piece.values.size(); ++i) {
      sum += segment_length(piece, net.length(e), i) * piece.values[i];
    }
  }
  return sum;
}

double tv(const PiecewiseConstantFn& f) {
  double sum = 0.0;
  for (const auto& piece : f.edges()) {
    for (std::size_t i = 0; i + 1 < piece.values.size(); ++i) {
      sum += std::abs(piece.values[i] - piece.values[i + 1]);
    }
  }
  const auto& net = f.network();
  for (NodeIndex v = 0; v < net.node_count(); ++v) {
    for (const auto& end : net.incident(v)) {
      sum += std::abs(f.node_value(v) - f.end_value(end));
    }
  }
  return sum;
}

double log_tv(const PiecewiseConstantFn& f) {
  auto check = [](double v) {
    if (!(v > 0.0)) throw Error(ErrorCode::NonpositiveValue, "log of a nonpositive value");
  };
  for (const auto& piece : f.edges()) std::for_each(piece.values.begin(), piece.values.end(), check);
  for (double v : f.node_values()) check(v);
  return tv(f.map_values([](double v) { return std::log(v); }));
}

std::pair<PiecewiseConstantFn, PiecewiseConstantFn> common_refinement(
    const PiecewiseConstantFn& f, const PiecewiseConstantFn& g) {
  require_same_network(f, g);
  const auto& net = f.network();
  std::vector<EdgePieces> fe(net.edge_count());
  std::vector<EdgePieces> ge(net.edge_count());
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& a = f.edge(e);
    const auto& b = g.edge(e);
    std::vector<double> merged;
    merged.reserve(a.breakpoints.size() + b.breakpoints.size());
    std::set_union(a.breakpoints.begin(), a.breakpoints.end(), b.breakpoints.begin(),
                   b.breakpoints.end(), std::back_inserter(merged));
    fe[e].breakpoints = merged;
    ge[e].breakpoints = merged;
    fe[e].values.reserve(merged.size() + 1);
    ge[e].values.reserve(merged.size() + 1);
    // Walk both breakpoint lists in step with the merged list.
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t k = 0; k <= merged.size(); ++k) {
      fe[e].values.push_back(a.values[ia]);
      ge[e].values.push_back(b.values[ib]);
      if (k == merged.size()) break;
      if (ia < a.breakpoints.size() && a.breakpoints[ia] == merged[k]) ++ia;
      if (ib < b.breakpoints.size() && b.breakpoints[ib] == merged[k]) ++ib;
    }
  }
  std::vector<double> fn(f.node_values().begin(), f.node_values().end());
  std::vector<double> gn(g.node_values().begin(), g.node_values().end());
  return {PiecewiseConstantFn(net, std::move(fe), std::move(fn)),
          PiecewiseConstantFn(net, std::move(ge), std::move(gn))};
}

double hellinger_sq(const PiecewiseConstantFn& f, const PiecewiseConstantFn& g) {
  const auto [fr, gr] = common_refinement(f, g);
  const auto& net = fr.network();
  double sum = 0.0;
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& a = fr.edge(e);
    const auto& b = gr.edge(e);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (a.values[i] < 0.0 || b.values[i] < 0.0) {
        throw Error(ErrorCode::NotADensity, "Hellinger distance of a negative function");
      }
      const double d = std::sqrt(a.values[i]) - std::sqrt(b.values[i]);
      sum += segment_length(a, net.length(e), i) * d * d;
    }
  }
  return 0.5 * sum;
}

double evaluate(const PiecewiseConstantFn& f, const NetworkPoint& p) {
  const auto& net = f.network();
  check_point(net, p);
  const double len = net.length(p.edge);
  if (p.offset == 0.0 || p.offset == len) {
    const NodeIndex v = p.offset == 0.0 ? net.edge(p.edge).u : net.edge(p.edge).v;
    double best = f.node_value(v);
    for (const auto& end : net.incident(v)) best = std::max(best, f.end_value(end));
    return best;
  }
  const auto& piece = f.edge(p.edge);
  const auto it = std::lower_bound(piece.breakpoints.begin(), piece.breakpoints.end(), p.offset);
  const auto i = static_cast<std::size_t>(it - piece.breakpoints.begin());
  if (it != piece.breakpoints.end() && *it == p.offset) {
    return std::max(piece.values[i], piece.values[i + 1]);
  }
  return piece.values[segment_at(piece, p.offset)];
}

double mean_log_likelihood(const PiecewiseConstantFn& f,
                           std::span<const NetworkPoint> observations) {
  if (observations.empty()) {
    throw Error(ErrorCode::EmptyObservations, "no observations to score");
  }
  double sum = 0.0;
  for (const auto& p : observations) {
    sum += std::log(std::max(evaluate(f, p), kLogLikelihoodFloor));
  }
  return sum / static_cast<double>(observations.size());
}

bool values_agree(double a, double b, double relative_tolerance) {
  return std::abs(a - b) <= relative_tolerance * std::max(std::abs(a), std::abs(b));
}

FusedPartition fused_partition(const PiecewiseConstantFn& f, double relative_tolerance) {
  const auto& net = f.network();
  std::vector<std::size_t> first(net.edge_count() + 1, 0);
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    first[e + 1] = first[e] + f.edge(e).values.size();
  }
  const std::size_t segments = first.back();
  DisjointSets sets(segments + net.node_count());

  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& values = f.edge(e).values;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      if (values_agree(values[i], values[i + 1], relative_tolerance)) {
        sets.unite(first[e] + i, first[e] + i + 1);
      }
    }
  }
  for (NodeIndex v = 0; v < net.node_count(); ++v) {
    for (const auto& end : net.incident(v)) {
      if (values_agree(f.node_value(v), f.end_value(end), relative_tolerance)) {
        const std::size_t seg = end.at_end ? first[end.edge + 1] - 1 : first[end.edge];
        sets.unite(segments + v, seg);
      }
    }
  }

  FusedPartition out;
  std::vector<std::size_t> label(segments + net.node_count(), kNoIndex);
  auto label_of = [&](std::size_t item) {
    auto& l = label[sets.find(item)];
    if (l == kNoIndex) l = out.region_count++;
    return l;
  };
  out.segment_region.resize(net.edge_count());
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    for (std::size_t i = 0; i < f.edge(e).values.size(); ++i) {
      out.segment_region[e].push_back(label_of(first[e] + i));
    }
  }
  out.node_region.resize(net.node_count());
  for (NodeIndex v = 0; v < net.node_count(); ++v) out.node_region[v] = label_of(segments + v);
  return out;
}

}  // namespace fde
