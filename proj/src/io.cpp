#include "fde/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fde/error.hpp"

namespace fde::io {

using Json = nlohmann::ordered_json;

namespace {

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

// nlohmann writes the shortest round-trip form; the formats here promise 17
// significant digits, so numbers are emitted by hand.
void emit(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      out += nl;
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) {
          out += ',';
          out += nl;
        }
        first = false;
        out += pad;
        out += Json(key).dump();
        out += indent > 0 ? ": " : ":";
        emit(value, out, indent, depth + 1);
      }
      out += nl;
      out += close_pad;
      out += '}';
      return;
    }
    case Json::value_t::array: {
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const Json& v) { return v.is_primitive(); });
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      if (!flat) out += nl;
      bool first = true;
      for (const auto& value : j) {
        if (!first) {
          out += ',';
          if (flat) {
            if (indent > 0) out += ' ';
          } else {
            out += nl;
          }
        }
        first = false;
        if (!flat) out += pad;
        emit(value, out, indent, depth + 1);
      }
      if (!flat) {
        out += nl;
        out += close_pad;
      }
      out += ']';
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

std::string dump(const Json& j) {
  std::string out;
  emit(j, out, 2, 0);
  out += '\n';
  return out;
}

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    parse_error(std::string("malformed JSON: ") + e.what());
  }
}

template <typename T>
T field(const Json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) parse_error(std::string("missing field \"") + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    parse_error(std::string("field \"") + key + "\" has the wrong type");
  }
}

const Json& array_field(const Json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_array()) {
    parse_error(std::string("missing array \"") + key + "\"");
  }
  return obj.at(key);
}

double parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    parse_error("not a finite number: \"" + std::string(s) + "\"");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

Json network_json(const GeometricNetwork& net) {
  Json nodes = Json::array();
  for (NodeIndex v = 0; v < net.node_count(); ++v) nodes.push_back({{"id", net.node_id(v)}});
  Json edges = Json::array();
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& edge = net.edge(e);
    edges.push_back({{"id", edge.id}, {"u", edge.u_id}, {"v", edge.v_id}, {"length", edge.length}});
  }
  return {{"nodes", nodes}, {"edges", edges}};
}

GeometricNetwork network_from_json(const Json& doc) {
  std::vector<std::string> nodes;
  for (const auto& n : array_field(doc, "nodes")) nodes.push_back(field<std::string>(n, "id"));
  std::vector<EdgeSpec> edges;
  for (const auto& e : array_field(doc, "edges")) {
    edges.push_back({field<std::string>(e, "id"), field<std::string>(e, "u"), field<std::string>(e, "v"),
                     field<double>(e, "length")});
  }
  GeometricNetwork net(std::move(nodes), std::move(edges));
  validate(net);
  return net;
}

std::vector<double> real_array(const Json& obj, const char* key) {
  std::vector<double> out;
  for (const auto& v : array_field(obj, key)) {
    if (!v.is_number()) parse_error(std::string("non-numeric entry in \"") + key + "\"");
    out.push_back(v.get<double>());
  }
  return out;
}

GeometricNetwork single_edge_check(const PiecewiseConstantFn& f) {
  if (f.network().edge_count() != 1) {
    throw Error(ErrorCode::InvalidInput, "plotting needs a single-edge estimate; embed the network first");
  }
  return f.network();
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "cannot read " + path);
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
}

std::string format_double(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidInput, "cannot serialize a non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GeometricNetwork parse_network(std::string_view text) { return network_from_json(parse_json(text)); }

std::string network_to_json(const GeometricNetwork& net) { return dump(network_json(net)); }

std::vector<NetworkPoint> parse_observations(std::string_view csv, const GeometricNetwork& net) {
  std::vector<NetworkPoint> out;
  std::size_t line_no = 0;
  bool header = false;
  while (!csv.empty()) {
    const auto eol = csv.find('\n');
    std::string_view line = trim(csv.substr(0, eol));
    csv = eol == std::string_view::npos ? std::string_view{} : csv.substr(eol + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header) {
      if (line != "edge_id,offset") parse_error("observations must start with the header edge_id,offset");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      parse_error("line " + std::to_string(line_no) + ": expected two fields");
    }
    const std::string_view id = trim(line.substr(0, comma));
    const auto edge = net.find_edge(id);
    if (!edge) {
      throw Error(ErrorCode::PointOffNetwork, "line " + std::to_string(line_no) + ": unknown edge \"" +
                                                  std::string(id) + "\"");
    }
    NetworkPoint p{*edge, parse_number(line.substr(comma + 1))};
    check_point(net, p);
    out.push_back(p);
  }
  if (!header) parse_error("observations file has no header");
  return out;
}

std::string observations_to_csv(const GeometricNetwork& net, std::span<const NetworkPoint> points) {
  std::string out = "edge_id,offset\n";
  for (const auto& p : points) {
    out += net.edge(p.edge).id;
    out += ',';
    out += format_double(p.offset);
    out += '\n';
  }
  return out;
}

std::string estimate_to_json(const PiecewiseConstantFn& f,
                             const std::optional<EstimateMetadata>& metadata) {
  const auto& net = f.network();
  Json edges = Json::array();
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& edge = net.edge(e);
    edges.push_back({{"id", edge.id},
                     {"u", edge.u_id},
                     {"v", edge.v_id},
                     {"length", edge.length},
                     {"breakpoints", f.edge(e).breakpoints},
                     {"values", f.edge(e).values}});
  }
  Json nodes = Json::array();
  for (NodeIndex v = 0; v < net.node_count(); ++v) {
    nodes.push_back({{"id", net.node_id(v)}, {"value", f.node_value(v)}});
  }
  Json doc = {{"edges", edges}, {"nodes", nodes}, {"density", f.is_density()}};
  if (metadata) {
    doc["metadata"] = {{"lambda", metadata->lambda},
                       {"n", metadata->n},
                       {"dof", metadata->dof},
                       {"objective", metadata->objective},
                       {"duality_gap", metadata->duality_gap},
                       {"iterations", metadata->iterations},
                       {"converged", metadata->converged},
                       {"nonpositive", metadata->nonpositive},
                       {"refit", metadata->refit}};
  }
  return dump(doc);
}

EstimateFile parse_estimate(std::string_view text) {
  const Json doc = parse_json(text);
  const GeometricNetwork net = network_from_json(doc);
  std::vector<EdgePieces> pieces(net.edge_count());
  for (const auto& e : array_field(doc, "edges")) {
    const auto found = net.find_edge(field<std::string>(e, "id"));
    if (!found) parse_error("unknown edge in estimate");
    const EdgeIndex idx = *found;
    pieces[idx].breakpoints = real_array(e, "breakpoints");
    pieces[idx].values = real_array(e, "values");
  }
  std::vector<double> values(net.node_count());
  for (const auto& n : array_field(doc, "nodes")) {
    const auto idx = net.find_node(field<std::string>(n, "id"));
    if (!idx) parse_error("unknown node in estimate");
    values[*idx] = field<double>(n, "value");
  }
  PiecewiseConstantFn f(net, std::move(pieces), std::move(values));
  if (doc.contains("density") && field<bool>(doc, "density")) f = f.as_density(1e-6);

  EstimateFile out{std::move(f), std::nullopt};
  if (doc.contains("metadata")) {
    const Json& m = doc.at("metadata");
    EstimateMetadata meta;
    meta.lambda = field<double>(m, "lambda");
    meta.n = field<std::size_t>(m, "n");
    meta.dof = field<std::size_t>(m, "dof");
    meta.objective = field<double>(m, "objective");
    meta.duality_gap = field<double>(m, "duality_gap");
    meta.iterations = field<std::size_t>(m, "iterations");
    meta.converged = field<bool>(m, "converged");
    meta.nonpositive = field<bool>(m, "nonpositive");
    meta.refit = field<bool>(m, "refit");
    out.metadata = meta;
  }
  return out;
}

std::string embedding_to_json(const Embedding& embedding,
                              const std::optional<PiecewiseConstantFn>& line_estimate) {
  Json order = Json::array();
  for (const auto& placed : embedding.order) {
    order.push_back({{"edge", embedding.source.edge(placed.edge).id},
                     {"forward", placed.forward},
                     {"start", placed.start},
                     {"length", embedding.source.length(placed.edge)}});
  }
  Json doc = {{"total_length", embedding.total_length}, {"order", order}};
  if (line_estimate) {
    const std::string text = estimate_to_json(*line_estimate);
    doc["estimate"] = Json::parse(text);
  }
  return dump(doc);
}

std::string selection_to_csv(const SelectionReport& report) {
  std::string out = "lambda,";
  out += to_string(report.criterion);
  out += ",dof,chosen,note\n";
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    out += format_double(e.lambda);
    out += ',';
    if (e.evaluated) out += format_double(e.score);
    out += ',';
    if (e.evaluated || e.dof > 0) out += std::to_string(e.dof);
    out += ',';
    out += report.chosen && *report.chosen == i ? "1" : "0";
    out += ',';
    out += e.note;
    out += '\n';
  }
  return out;
}

std::string folds_to_csv(const SelectionReport& report) {
  std::string out = "lambda,fold,evaluated,train_size,test_size,lambda_min,held_out\n";
  for (const auto& e : report.entries) {
    for (const auto& f : e.folds) {
      out += format_double(e.lambda) + ',' + std::to_string(f.fold) + ',' + (f.evaluated ? "1" : "0") + ',' +
             std::to_string(f.train_size) + ',' + std::to_string(f.test_size) + ',' +
             format_double(f.lambda_min) + ',' + (f.evaluated ? format_double(f.held_out) : "") + '\n';
    }
  }
  return out;
}

std::string rate_to_csv(const RateReport& report) {
  std::string out = "n,lambda,reps,mean_h2,std_h2,unconverged,slope\n";
  for (const auto& row : report.rows) {
    out += std::to_string(row.n) + ',' + format_double(row.lambda) + ',' + std::to_string(report.reps) + ',' +
           format_double(row.mean_h2) + ',' + format_double(row.std_h2) + ',' +
           std::to_string(row.unconverged) + ',' + (report.has_slope ? format_double(report.slope) : "") + '\n';
  }
  return out;
}

std::vector<double> parse_real_list(std::string_view text) {
  std::vector<double> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::string plot_svg(const PiecewiseConstantFn& f, const PlotOptions& options) {
  const GeometricNetwork net = single_edge_check(f);
  if (options.truth) single_edge_check(*options.truth);
  const double len = net.length(0);

  constexpr double width = 720, height = 420, left = 60, right = 20, top = 36, bottom = 48;
  double ymax = 0.0;
  for (double v : f.edge(0).values) ymax = std::max(ymax, v);
  if (options.truth) {
    for (double v : options.truth->edge(0).values) ymax = std::max(ymax, v);
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  ymax *= 1.1;
  auto X = [&](double t) { return fixed(left + (width - left - right) * t / len); };
  auto Y = [&](double v) { return fixed(height - bottom - (height - top - bottom) * std::max(v, 0.0) / ymax); };

  auto step_path = [&](const PiecewiseConstantFn& g) {
    const auto& piece = g.edge(0);
    std::string d = "M" + X(0.0) + "," + Y(piece.values[0]);
    for (std::size_t i = 0; i < piece.values.size(); ++i) {
      const double hi = i == piece.breakpoints.size() ? len : piece.breakpoints[i];
      d += " H" + X(hi);
      if (i + 1 < piece.values.size()) d += " V" + Y(piece.values[i + 1]);
    }
    return d;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"420\" viewBox=\"0 0 720 420\">\n";
  svg += "<rect width=\"720\" height=\"420\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    svg += "<text x=\"360\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           xml_escape(options.title) + "</text>\n";
  }
  const std::string x0 = fixed(left), x1 = fixed(width - right), y0 = fixed(height - bottom), y1 = fixed(top);
  svg += "<path d=\"M" + x0 + "," + y1 + " V" + y0 + " H" + x1 + "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + x0 + "\" y=\"" + fixed(height - bottom + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n";
  svg += "<text x=\"" + x1 + "\" y=\"" + fixed(height - bottom + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + short_number(len) + "</text>\n";
  svg += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(top + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + short_number(ymax) + "</text>\n";
  if (options.truth) {
    svg += "<path d=\"" + step_path(*options.truth) +
           "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
  }
  svg += "<path d=\"" + step_path(f) + "\" fill=\"none\" stroke=\"#1f4e8c\" stroke-width=\"2\"/>\n";
  if (!options.observations.empty()) {
    svg += "<g stroke=\"#555555\" stroke-width=\"0.8\">\n";
    for (double t : options.observations) {
      svg += "<line x1=\"" + X(t) + "\" y1=\"" + y0 + "\" x2=\"" + X(t) + "\" y2=\"" +
             fixed(height - bottom - 8) + "\"/>\n";
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace fde::io
