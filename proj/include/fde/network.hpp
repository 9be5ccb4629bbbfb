#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fde {

using NodeIndex = std::size_t;
using EdgeIndex = std::size_t;

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

/// Edge as supplied by a caller: endpoints are referenced by node id.
struct EdgeSpec {
  std::string id;
  std::string u;
  std::string v;
  double length = 0.0;
};

/// One end of an edge. `at_end == false` is offset 0 (node u), otherwise
/// offset `length` (node v).
struct EdgeEnd {
  EdgeIndex edge = kNoIndex;
  bool at_end = false;

  friend bool operator==(const EdgeEnd&, const EdgeEnd&) = default;
};

/// A point (e, t) with t in [0, length(e)].
struct NetworkPoint {
  EdgeIndex edge = kNoIndex;
  double offset = 0.0;

  friend bool operator==(const NetworkPoint&, const NetworkPoint&) = default;
};

/// Immutable geometric network. Nodes and edges are stored sorted by id, so
/// node index 0 is the lowest node id and edge indices follow ascending edge
/// ids. Copies share the same underlying data.
///
/// Construction only indexes the input; dangling endpoints, nonpositive
/// lengths and disconnection are reported by validate().
class GeometricNetwork {
 public:
  struct Edge {
    std::string id;
    std::string u_id;
    std::string v_id;
    NodeIndex u = kNoIndex;
    NodeIndex v = kNoIndex;
    double length = 0.0;
  };

  GeometricNetwork();
  GeometricNetwork(std::vector<std::string> node_ids, std::vector<EdgeSpec> edges);

  std::size_t node_count() const noexcept;
  std::size_t edge_count() const noexcept;

  const std::string& node_id(NodeIndex v) const;
  const Edge& edge(EdgeIndex e) const;
  double length(EdgeIndex e) const { return edge(e).length; }

  std::optional<NodeIndex> find_node(std::string_view id) const;
  std::optional<EdgeIndex> find_edge(std::string_view id) const;

  /// Edge ends incident to v, ascending by edge index; a self-loop contributes
  /// its start end before its far end.
  std::span<const EdgeEnd> incident(NodeIndex v) const;
  std::size_t degree(NodeIndex v) const { return incident(v).size(); }

  /// Node at the given end of an edge.
  NodeIndex endpoint(EdgeEnd end) const;

  friend bool operator==(const GeometricNetwork& a, const GeometricNetwork& b);

 private:
  struct Data;
  std::shared_ptr<const Data> data_;
};

/// Throws fde::Error (DanglingEndpoint, NonpositiveLength,
/// DisconnectedNetwork, InvalidInput) naming the offending element.
void validate(const GeometricNetwork& network);

double total_length(const GeometricNetwork& network);

/// Throws PointOffNetwork unless p lies on one of the closed edge intervals.
void check_point(const GeometricNetwork& network, const NetworkPoint& p);

/// Convenience: a single edge "e" from "a" to "b".
GeometricNetwork make_interval(double length);

}  // namespace fde
