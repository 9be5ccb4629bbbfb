#include "fde/embedding.hpp"


#include "fde/error.hpp"

namespace fde {

namespace {

// Expanded graph: value nodes 0..nv-1, then limit node nv + 2e + at_end for
// each edge end.
struct ExpandedGraph {
  const GeometricNetwork& net;

  std::size_t size() const { return net.node_count() + 2 * net.edge_count(); }
  bool is_limit(std::size_t x) const { return x >= net.node_count(); }
  std::size_t limit(EdgeEnd end) const {
    return net.node_count() + 2 * end.edge + (end.at_end ? 1 : 0);
  }
  EdgeEnd end_of(std::size_t x) const {
    const std::size_t k = x - net.node_count();
    return {k / 2, (k % 2) == 1};
  }
  std::size_t degree(std::size_t x) const {
    return is_limit(x) ? 2 : net.degree(x);
  }
  // A limit node tries its partner across the open interval first.
  std::size_t neighbor(std::size_t x, std::size_t k) const {
    if (!is_limit(x)) return limit(net.incident(x)[k]);
    const EdgeEnd end = end_of(x);
    if (k == 0) return limit({end.edge, !end.at_end});
    return net.endpoint(end);
  }
};

}  // namespace

Embedding dfs_embed(const GeometricNetwork& network) {
  validate(network);
  const ExpandedGraph graph{network};

  Embedding out;
  out.source = network;
  out.order.reserve(network.edge_count());

  std::vector<char> visited(graph.size(), 0);
  struct Frame {
    std::size_t vertex;
    std::size_t next;
  };
  std::vector<Frame> stack{{0, 0}};
  visited[0] = 1;
  double cursor = 0.0;
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next == graph.degree(top.vertex)) {
      stack.pop_back();
      continue;
    }
    const std::size_t from = top.vertex;
    const std::size_t to = graph.neighbor(from, top.next++);
    if (visited[to]) continue;
    visited[to] = 1;
    if (graph.is_limit(from) && graph.is_limit(to)) {
      const EdgeEnd end = graph.end_of(from);
      out.order.push_back({end.edge, !end.at_end, cursor});
      cursor += network.length(end.edge);
    }
    stack.push_back({to, 0});
  }

  if (out.order.size() != network.edge_count()) {
    throw Error(ErrorCode::DisconnectedNetwork, "depth-first search missed an edge");
  }
  out.total_length = cursor;
  out.line = GeometricNetwork({"end", "start"}, {{"embedded", "start", "end", cursor}});
  return out;
}

PiecewiseConstantFn embed_function(const Embedding& embedding, const PiecewiseConstantFn& f) {
  if (!(f.network() == embedding.source)) {
    throw Error(ErrorCode::NetworkMismatch, "function is not on the embedded network");
  }
  EdgePieces line;
  const auto& net = embedding.source;
  bool first = true;
  for (const auto& placed : embedding.order) {
    const auto& piece = f.edge(placed.edge);
    const double len = net.length(placed.edge);
    if (!first) line.breakpoints.push_back(placed.start);
    first = false;
    const std::size_t nb = piece.breakpoints.size();
    if (placed.forward) {
      for (double b : piece.breakpoints) line.breakpoints.push_back(placed.start + b);
      line.values.insert(line.values.end(), piece.values.begin(), piece.values.end());
    } else {
      for (std::size_t k = nb; k-- > 0;) {
        line.breakpoints.push_back(placed.start + (len - piece.breakpoints[k]));
      }
      line.values.insert(line.values.end(), piece.values.rbegin(), piece.values.rend());
    }
  }
  // Node order of `line` is {"end", "start"}.
  std::vector<double> nodes{line.values.back(), line.values.front()};
  return PiecewiseConstantFn(embedding.line, {std::move(line)}, std::move(nodes));
}

double embed_point(const Embedding& embedding, const NetworkPoint& p) {
  check_point(embedding.source, p);
  for (const auto& placed : embedding.order) {
    if (placed.edge != p.edge) continue;
    const double len = embedding.source.length(p.edge);
    return placed.start + (placed.forward ? p.offset : len - p.offset);
  }
  throw Error(ErrorCode::NetworkMismatch, "edge missing from embedding");
}

}  // namespace fde
