#include "fde/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fde/error.hpp"

namespace fde {

struct GeometricNetwork::Data {
  std::vector<std::string> node_ids;
  std::vector<Edge> edges;
  std::map<std::string, NodeIndex, std::less<>> node_lookup;
  std::map<std::string, EdgeIndex, std::less<>> edge_lookup;
  // CSR incidence: ends of node v are incidence[offsets[v] .. offsets[v+1]).
  std::vector<std::size_t> incidence_offsets;
  std::vector<EdgeEnd> incidence;
};

GeometricNetwork::GeometricNetwork()
    : data_(std::make_shared<const Data>(Data{{}, {}, {}, {}, {0}, {}})) {}

GeometricNetwork::GeometricNetwork(std::vector<std::string> node_ids,
                                   std::vector<EdgeSpec> edges) {
  auto data = std::make_shared<Data>();

  std::sort(node_ids.begin(), node_ids.end());
  if (auto dup = std::adjacent_find(node_ids.begin(), node_ids.end());
      dup != node_ids.end()) {
    throw Error(ErrorCode::InvalidInput, "duplicate node id '" + *dup + "'");
  }
  std::sort(edges.begin(), edges.end(),
            [](const EdgeSpec& a, const EdgeSpec& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i].id == edges[i - 1].id) {
      throw Error(ErrorCode::InvalidInput,
                  "duplicate edge id '" + edges[i].id + "'");
    }
  }

  data->node_ids = std::move(node_ids);
  for (NodeIndex v = 0; v < data->node_ids.size(); ++v) {
    data->node_lookup.emplace(data->node_ids[v], v);
  }

  auto resolve = [&](const std::string& id) -> NodeIndex {
    auto it = data->node_lookup.find(id);
    return it == data->node_lookup.end() ? kNoIndex : it->second;
  };

  data->edges.reserve(edges.size());
  for (EdgeIndex e = 0; e < edges.size(); ++e) {
    auto& spec = edges[e];
    Edge edge{spec.id, spec.u, spec.v, resolve(spec.u), resolve(spec.v), spec.length};
    data->edge_lookup.emplace(edge.id, e);
    data->edges.push_back(std::move(edge));
  }

  const std::size_t nv = data->node_ids.size();
  std::vector<std::size_t> counts(nv, 0);
  for (const auto& edge : data->edges) {
    if (edge.u != kNoIndex) ++counts[edge.u];
    if (edge.v != kNoIndex) ++counts[edge.v];
  }
  data->incidence_offsets.assign(nv + 1, 0);
  std::partial_sum(counts.begin(), counts.end(),
                   data->incidence_offsets.begin() + 1);
  data->incidence.resize(data->incidence_offsets.back());
  std::vector<std::size_t> cursor(data->incidence_offsets.begin(),
                                  data->incidence_offsets.end() - 1);
  // Edges are visited in index order and the start end before the far end,
  // which yields the documented incidence ordering without a sort.
  for (EdgeIndex e = 0; e < data->edges.size(); ++e) {
    const auto& edge = data->edges[e];
    if (edge.u != kNoIndex) data->incidence[cursor[edge.u]++] = {e, false};
    if (edge.v != kNoIndex) data->incidence[cursor[edge.v]++] = {e, true};
  }

  data_ = std::move(data);
}

std::size_t GeometricNetwork::node_count() const noexcept {
  return data_->node_ids.size();
}

std::size_t GeometricNetwork::edge_count() const noexcept {
  return data_->edges.size();
}

const std::string& GeometricNetwork::node_id(NodeIndex v) const {
  return data_->node_ids.at(v);
}

const GeometricNetwork::Edge& GeometricNetwork::edge(EdgeIndex e) const {
  return data_->edges.at(e);
}

std::optional<NodeIndex> GeometricNetwork::find_node(std::string_view id) const {
  auto it = data_->node_lookup.find(id);
  if (it == data_->node_lookup.end()) return std::nullopt;
  return it->second;
}

std::optional<EdgeIndex> GeometricNetwork::find_edge(std::string_view id) const {
  auto it = data_->edge_lookup.find(id);
  if (it == data_->edge_lookup.end()) return std::nullopt;
  return it->second;
}

std::span<const EdgeEnd> GeometricNetwork::incident(NodeIndex v) const {
  const auto& d = *data_;
  const std::size_t begin = d.incidence_offsets.at(v);
  const std::size_t end = d.incidence_offsets.at(v + 1);
  return {d.incidence.data() + begin, end - begin};
}

NodeIndex GeometricNetwork::endpoint(EdgeEnd end) const {
  const auto& e = edge(end.edge);
  return end.at_end ? e.v : e.u;
}

bool operator==(const GeometricNetwork& a, const GeometricNetwork& b) {
  if (a.data_ == b.data_) return true;
  if (a.data_->node_ids != b.data_->node_ids) return false;
  const auto& ea = a.data_->edges;
  const auto& eb = b.data_->edges;
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].id != eb[i].id || ea[i].u_id != eb[i].u_id ||
        ea[i].v_id != eb[i].v_id || ea[i].length != eb[i].length) {
      return false;
    }
  }
  return true;
}

void validate(const GeometricNetwork& network) {
  if (network.edge_count() == 0) {
    throw Error(ErrorCode::InvalidInput, "network has no edges");
  }
  for (EdgeIndex e = 0; e < network.edge_count(); ++e) {
    const auto& edge = network.edge(e);
    if (edge.u == kNoIndex || edge.v == kNoIndex) {
      const auto& missing = edge.u == kNoIndex ? edge.u_id : edge.v_id;
      throw Error(ErrorCode::DanglingEndpoint,
                  "edge '" + edge.id + "' references unknown node '" + missing + "'");
    }
    if (!std::isfinite(edge.length) || !(edge.length > 0.0)) {
      throw Error(ErrorCode::NonpositiveLength,
                  "edge '" + edge.id + "' has nonpositive or non-finite length");
    }
  }

  const std::size_t nv = network.node_count();
  std::vector<char> seen(nv, 0);
  std::vector<NodeIndex> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeIndex v = stack.back();
    stack.pop_back();
    for (const auto& end : network.incident(v)) {
      const auto& edge = network.edge(end.edge);
      const NodeIndex other = end.at_end ? edge.u : edge.v;
      if (!seen[other]) {
        seen[other] = 1;
        ++reached;
        stack.push_back(other);
      }
    }
  }
  if (reached != nv) {
    const auto it = std::find(seen.begin(), seen.end(), 0);
    throw Error(ErrorCode::DisconnectedNetwork,
                "node '" + network.node_id(static_cast<NodeIndex>(it - seen.begin())) +
                    "' is not reachable from '" + network.node_id(0) + "'");
  }
}

double total_length(const GeometricNetwork& network) {
  double sum = 0.0;
  for (EdgeIndex e = 0; e < network.edge_count(); ++e) sum += network.length(e);
  return sum;
}

void check_point(const GeometricNetwork& network, const NetworkPoint& p) {
  if (p.edge >= network.edge_count()) {
    throw Error(ErrorCode::PointOffNetwork, "point references an unknown edge");
  }
  const double len = network.length(p.edge);
  if (!std::isfinite(p.offset) || p.offset < 0.0 || p.offset > len) {
    throw Error(ErrorCode::PointOffNetwork,
                "offset outside edge '" + network.edge(p.edge).id + "'");
  }
}

GeometricNetwork make_interval(double length) {
  return GeometricNetwork({"a", "b"}, {{"e", "a", "b", length}});
}

}  // namespace fde
