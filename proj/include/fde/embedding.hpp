#pragma once

#include <vector>

#include "fde/density.hpp"
#include "fde/network.hpp"

namespace fde {

/// One edge of the source network laid onto the line.
struct EmbeddedEdge {
  EdgeIndex edge = kNoIndex;
  bool forward = true;  // offset 0 of the edge maps to `start`
  double start = 0.0;

  friend bool operator==(const EmbeddedEdge&, const EmbeddedEdge&) = default;
};

/// Depth-first linearization of a network onto [0, total_length].
struct Embedding {
  GeometricNetwork source;
  GeometricNetwork line;  // single edge "embedded" from "start" to "end"
  std::vector<EmbeddedEdge> order;
  double total_length = 0.0;
};

/// Depth-first traversal of the expanded graph in which every node is split
/// into a value node plus one limit node per incident edge end. Rooted at the
/// value node of the lowest node id; a value node explores its limit nodes in
/// incidence order (ascending edge id). Each original edge is crossed exactly
/// once, in the order recorded. Throws DisconnectedNetwork.
Embedding dfs_embed(const GeometricNetwork& network);

/// Image f o gamma^-1 on `embedding.line`. Edge junctions become breakpoints;
/// the two node values of the line copy their adjacent segments.
/// Throws NetworkMismatch.
PiecewiseConstantFn embed_function(const Embedding& embedding, const PiecewiseConstantFn& f);

/// Point of the line corresponding to a network point.
double embed_point(const Embedding& embedding, const NetworkPoint& p);

}  // namespace fde
