#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fde/density.hpp"
#include "fde/embedding.hpp"
#include "fde/network.hpp"
#include "fde/select.hpp"
#include "fde/simulate.hpp"

namespace fde::io {

// All parsers throw fde::Error with ParseError (or the validation code of the
// offending object); file helpers throw IoError.

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// %.17g, with "inf"/"nan" rejected.
std::string format_double(double v);

// {"nodes": [{"id": ...}], "edges": [{"id", "u", "v", "length"}]}
GeometricNetwork parse_network(std::string_view json);
std::string network_to_json(const GeometricNetwork& net);

// CSV with header edge_id,offset.
std::vector<NetworkPoint> parse_observations(std::string_view csv, const GeometricNetwork& net);
std::string observations_to_csv(const GeometricNetwork& net, std::span<const NetworkPoint> points);

struct EstimateMetadata {
  double lambda = 0.0;
  std::size_t n = 0;
  std::size_t dof = 0;
  double objective = 0.0;
  double duality_gap = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool nonpositive = false;
  bool refit = false;
};

struct EstimateFile {
  PiecewiseConstantFn estimate;
  std::optional<EstimateMetadata> metadata;
};

/// Self-contained: the network is embedded next to the values.
std::string estimate_to_json(const PiecewiseConstantFn& f,
                             const std::optional<EstimateMetadata>& metadata = std::nullopt);
EstimateFile parse_estimate(std::string_view json);

std::string embedding_to_json(const Embedding& embedding,
                              const std::optional<PiecewiseConstantFn>& line_estimate = std::nullopt);

/// lambda,<criterion>,dof,chosen,note
std::string selection_to_csv(const SelectionReport& report);
/// lambda,fold,evaluated,train_size,test_size,lambda_min,held_out
std::string folds_to_csv(const SelectionReport& report);
/// n,lambda,reps,mean_h2,std_h2,unconverged,slope
std::string rate_to_csv(const RateReport& report);

/// Comma-separated list of reals.
std::vector<double> parse_real_list(std::string_view text);

struct PlotOptions {
  std::vector<double> observations;      // offsets along the single edge
  std::optional<PiecewiseConstantFn> truth;
  std::string title;
};

/// Step plot of a single-edge function.
/// Throws InvalidInput when f lives on more than one edge.
std::string plot_svg(const PiecewiseConstantFn& f, const PlotOptions& options = {});

}  // namespace fde::io
