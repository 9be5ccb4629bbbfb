// One line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "fde/assemble.hpp"
#include "fde/density.hpp"
#include "fde/embedding.hpp"
#include "fde/error.hpp"
#include "fde/io.hpp"
#include "fde/random.hpp"
#include "fde/select.hpp"
#include "fde/simulate.hpp"
#include "fde/solver.hpp"
#include "oracle/oracle.hpp"
#include "test_support.hpp"

using namespace fde;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

// Instances shared by criteria 2, 3 and 5: interior observations only.
struct Instance {
  GeometricNetwork net;
  std::vector<NetworkPoint> points;
  double lambda = 0.0;
};

std::vector<Instance> random_instances(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Instance> out;
  for (std::size_t i = 0; i < count; ++i) {
    Instance inst;
    inst.net = test::random_network(rng, 10);
    std::uniform_int_distribution<std::size_t> n(1, 200);
    inst.points = test::uniform_points(inst.net, n(rng), rng);
    const double lo = 1.1 * lambda_min(build_observations(inst.net, inst.points), inst.net);
    inst.lambda = log_uniform(rng, lo, std::max(0.1, 10.0 * lo));
    out.push_back(std::move(inst));
  }
  return out;
}

const std::vector<FitResult>& shared_fits() {
  static const std::vector<FitResult> fits = [] {
    std::vector<FitResult> out;
    for (const auto& inst : random_instances(100, 2024)) out.push_back(fit(inst.net, inst.points, inst.lambda));
    return out;
  }();
  return fits;
}

double shared_fit_seconds = 0.0;

Verdict existence_threshold() {
  Stopwatch clock;
  const auto net = make_interval(1.0);
  std::vector<NetworkPoint> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({0, (i + 0.5) / 100.0});
  const auto ok = fit(net, pts, 0.006);
  double threshold = -1.0;
  try {
    fit(net, pts, 0.004);
  } catch (const LambdaTooSmall& e) {
    threshold = e.threshold();
  }
  const double t = clock.seconds();
  const bool pass = ok.solution.converged() && threshold == 0.005 && t < 1.0;
  return {pass, fmt("lambda 0.006 converged=%d, lambda 0.004 threshold %.17g, %.3f s", ok.solution.converged(),
                    threshold, t)};
}

Verdict normalization() {
  Stopwatch clock;
  const auto& fits = shared_fits();
  shared_fit_seconds = clock.seconds();
  std::size_t converged = 0;
  double worst = 0.0;
  for (const auto& r : fits) {
    if (!r.solution.converged()) continue;
    ++converged;
    worst = std::max(worst, std::abs(r.solution.mass - 1.0));
  }
  const bool pass = worst <= 1e-6 && converged > 0 && shared_fit_seconds < 120.0;
  return {pass, fmt("%zu/%zu converged, max |mass - 1| = %.3g, %.2f s", converged, fits.size(), worst,
                    shared_fit_seconds)};
}

Verdict duality_kkt() {
  double gap = 0.0, box = 0.0, eq = 0.0;
  std::size_t unconverged = 0;
  for (const auto& r : shared_fits()) {
    if (!r.solution.converged()) ++unconverged;
    gap = std::max(gap, std::abs(r.solution.relative_gap));
    box = std::max(box, r.solution.y.lpNorm<Eigen::Infinity>());
    eq = std::max(eq, r.solution.equality_violation);
  }
  const bool pass = unconverged == 0 && gap <= 1e-6 && box <= 1.0 + 1e-8 && eq <= 1e-8;
  return {pass, fmt("max relative gap %.3g, max |y| %.17g, max |D2'y + u| %.3g, unconverged %zu", gap, box, eq,
                    unconverged)};
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  std::size_t done = 0, largest = 0;
  bool all_converged = true;
  while (done < 20) {
    const auto net = test::random_network(rng, 8);
    std::uniform_int_distribution<std::size_t> n(1, 40);
    const auto pts = test::uniform_points(net, n(rng), rng);
    const auto obs = build_observations(net, pts);
    const double lo = 1.1 * lambda_min(obs, net);
    const double lam = log_uniform(rng, lo, std::max(0.1, 10.0 * lo));
    const auto r = fit(net, obs, lam);
    if (r.qp.segment_count() > 50) continue;
    largest = std::max(largest, r.qp.segment_count());
    const auto ref = oracle::solve(net, pts, lam);
    all_converged = all_converged && ref.converged && r.solution.converged();
    for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
      for (std::size_t i = 0; i < ref.z[e].size(); ++i) {
        const double z = r.solution.z[static_cast<Eigen::Index>(r.qp.segment(e, i))];
        worst = std::max(worst, std::abs(z - ref.z[e][i]));
      }
    }
    ++done;
  }
  const bool pass = all_converged && worst <= 1e-4;
  return {pass, fmt("20 instances up to %zu segments, max |z - z_oracle| = %.3g", largest, worst)};
}

// Interior pairs: both segments lie between two observations on one edge.
Verdict ordering_property() {
  std::size_t pairs = 0, violations = 0;
  for (const auto& r : shared_fits()) {
    const auto& qp = r.qp;
    for (EdgeIndex e = 0; e < qp.network.edge_count(); ++e) {
      const std::size_t count = qp.edge_first_segment[e + 1] - qp.edge_first_segment[e];
      for (std::size_t i = 1; i + 2 < count; ++i) {
        const auto a = static_cast<Eigen::Index>(qp.segment(e, i));
        const auto b = a + 1;
        const double ds = qp.s[a] - qp.s[b];
        const double dz = r.solution.z[a] - r.solution.z[b];
        ++pairs;
        if ((ds > 0.0 && dz > 1e-9) || (ds < 0.0 && dz < -1e-9)) ++violations;
      }
    }
  }
  return {violations == 0 && pairs > 0, fmt("%zu interior pairs, %zu violations", pairs, violations)};
}

GeometricNetwork rescaled(const GeometricNetwork& net, double c) {
  std::vector<std::string> nodes;
  for (NodeIndex v = 0; v < net.node_count(); ++v) nodes.push_back(net.node_id(v));
  std::vector<EdgeSpec> edges;
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto& edge = net.edge(e);
    edges.push_back({edge.id, net.node_id(edge.u), net.node_id(edge.v), c * edge.length});
  }
  return GeometricNetwork(nodes, edges);
}

std::vector<NetworkPoint> rescaled(std::vector<NetworkPoint> pts, double c) {
  for (auto& p : pts) p.offset *= c;
  return pts;
}

Verdict underfit_limit() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  bool converged = true;
  for (int rep = 0; rep < 20; ++rep) {
    const auto raw = test::random_network(rng, 10);
    const double c = 1.0 / total_length(raw);
    const auto net = rescaled(raw, c);
    std::uniform_int_distribution<std::size_t> n(1, 200);
    const auto pts = rescaled(test::uniform_points(raw, n(rng), rng), c);
    const auto r = fit(net, pts, 10.0);
    converged = converged && r.solution.converged();
    worst = std::max(worst, (r.solution.z.array() - 1.0).abs().maxCoeff());
  }
  return {converged && worst <= 1e-6, fmt("20 instances at lambda 10, max |z - 1| = %.3g", worst)};
}

Verdict scale_equivariance() {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  bool converged = true;
  for (int rep = 0; rep < 10; ++rep) {
    const auto net = test::random_network(rng, 10);
    std::uniform_int_distribution<std::size_t> n(5, 200);
    const auto pts = test::uniform_points(net, n(rng), rng);
    const double lam = 1.5 * lambda_min(build_observations(net, pts), net) + 0.01;
    const auto base = fit(net, pts, lam);
    converged = converged && base.solution.converged();
    for (double c : {0.1, 3.0, 100.0}) {
      const auto r = fit(rescaled(net, c), rescaled(pts, c), lam);
      converged = converged && r.solution.converged();
      for (Eigen::Index i = 0; i < base.solution.z.size(); ++i) {
        const double expected = base.solution.z[i];
        worst = std::max(worst, std::abs(c * r.solution.z[i] - expected) / std::abs(expected));
      }
    }
  }
  return {converged && worst <= 1e-6, fmt("30 rescaled fits, max relative deviation of c z_c from z = %.3g", worst)};
}

PiecewiseConstantFn random_function(const GeometricNetwork& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> value(0.1, 2.0);
  std::uniform_int_distribution<int> breaks(0, 3);
  std::vector<EdgePieces> edges;
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    std::uniform_real_distribution<double> at(0.0, net.length(e));
    EdgePieces piece;
    for (int k = breaks(rng); k > 0; --k) piece.breakpoints.push_back(at(rng));
    std::sort(piece.breakpoints.begin(), piece.breakpoints.end());
    piece.breakpoints.erase(std::unique(piece.breakpoints.begin(), piece.breakpoints.end()), piece.breakpoints.end());
    for (std::size_t k = 0; k <= piece.breakpoints.size(); ++k) piece.values.push_back(value(rng));
    edges.push_back(std::move(piece));
  }
  std::vector<double> nodes;
  for (NodeIndex v = 0; v < net.node_count(); ++v) nodes.push_back(value(rng));
  const PiecewiseConstantFn g(net, edges, nodes);
  const double mass = integrate(g);
  return g.map_values([mass](double v) { return v / mass; });
}

Verdict dfs_embedding() {
  std::mt19937_64 rng(10);
  double tv_excess = -INFINITY, integral = 0.0, hellinger = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto net = test::random_network(rng, 10);
    const auto emb = dfs_embed(net);
    const auto g = random_function(net, rng);
    const auto k = random_function(net, rng);
    const auto eg = embed_function(emb, g);
    const auto ek = embed_function(emb, k);
    tv_excess = std::max(tv_excess, tv(eg) - 2.0 * tv(g));
    integral = std::max({integral, std::abs(integrate(eg) - integrate(g)), std::abs(integrate(ek) - integrate(k))});
    hellinger = std::max(hellinger, std::abs(hellinger_sq(eg, ek) - hellinger_sq(g, k)));
  }
  const bool pass = tv_excess <= 1e-12 && integral <= 1e-12 && hellinger <= 1e-12;
  return {pass, fmt("50 networks, max TV(emb) - 2 TV = %.3g, integral error %.3g, Hellinger error %.3g", tv_excess,
                    integral, hellinger)};
}

std::string rate_summary(const RateReport& report) {
  std::string out;
  for (const auto& row : report.rows) out += fmt("n=%zu:%.4g ", row.n, row.mean_h2);
  return out;
}

std::size_t rate_unconverged(const RateReport& report) {
  std::size_t total = 0;
  for (const auto& row : report.rows) total += row.unconverged;
  return total;
}

const std::vector<std::size_t> kRateSizes{100, 316, 1000, 3162, 10000};

Verdict univariate_rate() {
  Stopwatch clock;
  const auto net = make_interval(1.0);
  const PiecewiseConstantFn truth(net, {{{1.0 / 3.0, 2.0 / 3.0}, {0.5, 1.5, 1.0}}}, {0.5, 1.0});
  const auto report = rate_experiment(truth.as_density(), kRateSizes, 20, PowerLambdaRule{}, 3);
  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
    decreasing = decreasing && report.rows[i + 1].mean_h2 < report.rows[i].mean_h2;
  }
  const double t = clock.seconds();
  const bool pass = report.has_slope && report.slope >= -0.9 && report.slope <= -0.45 && decreasing && t < 600.0;
  return {pass, fmt("slope %.4f, decreasing=%d, unconverged %zu, %.1f s; %s", report.slope, decreasing,
                    rate_unconverged(report), t, rate_summary(report).c_str())};
}

Verdict network_rate() {
  Stopwatch clock;
  const auto net = test::star({1.0, 0.5, 1.5});
  const PiecewiseConstantFn shape(net, {{{0.4}, {0.6, 0.2}}, {{}, {0.9}}, {{0.5, 1.0}, {0.3, 0.7, 0.3}}},
                                  {0.6, 0.2, 0.9, 0.3});
  const double mass = integrate(shape);
  const auto truth = shape.map_values([mass](double v) { return v / mass; }).as_density();
  const auto report = rate_experiment(truth, kRateSizes, 20, PowerLambdaRule{}, 5);
  const double t = clock.seconds();
  const bool pass = report.has_slope && report.slope <= -0.45 && t < 600.0;
  return {pass, fmt("slope %.4f, unconverged %zu, %.1f s; %s", report.slope, rate_unconverged(report), t,
                    rate_summary(report).c_str())};
}

// Grid road network: every grid edge is present with random lengths.
Verdict solver_scale() {
  const int side = 70;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> len(0.5, 1.5);
  std::vector<std::string> nodes;
  for (int i = 0; i < side * side; ++i) nodes.push_back("v" + std::to_string(i));
  std::vector<EdgeSpec> edges;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int v = r * side + c;
      if (c + 1 < side) edges.push_back({"h" + std::to_string(v), nodes[v], nodes[v + 1], len(rng)});
      if (r + 1 < side) edges.push_back({"d" + std::to_string(v), nodes[v], nodes[v + side], len(rng)});
    }
  }
  const GeometricNetwork net(nodes, edges);
  const auto pts = test::uniform_points(net, 8000, rng);
  SolverSettings settings;
  settings.eps_abs = 1e-6;
  settings.eps_rel = 1e-6;
  const auto obs = build_observations(net, pts);
  const double lam = PowerLambdaRule{}(obs.n);
  Stopwatch clock;
  const auto r = fit(net, obs, lam, settings);
  const double t = clock.seconds();
  const std::size_t variables = r.qp.row_count();
  const std::size_t rows = variables + net.node_count();
  const bool pass = variables >= 19000 && rows >= 25000 && r.solution.converged() && t < 60.0;
  return {pass, fmt("%zu dual variables, %zu constraint rows, converged=%d in %zu iterations, gap %.3g, %.2f s",
                    variables, rows, r.solution.converged(), r.solution.iterations, r.solution.relative_gap, t)};
}

// Standard normal truncated to [-4, 4], placed on an edge of length 8.
constexpr double kHalfWidth = 4.0;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double h2_to_normal(const PiecewiseConstantFn& f) {
  const double z = normal_cdf(kHalfWidth) - normal_cdf(-kHalfWidth);
  // Integral of sqrt(phi / z) over [a, b].
  auto root_mass = [z](double a, double b) {
    const double k = std::pow(2.0 * M_PI, -0.25) * std::sqrt(4.0 * M_PI) / std::sqrt(z);
    return k * (normal_cdf(b / std::sqrt(2.0)) - normal_cdf(a / std::sqrt(2.0)));
  };
  const auto& piece = f.edge(0);
  double affinity = 0.0;
  for (std::size_t k = 0; k < piece.values.size(); ++k) {
    const double a = k == 0 ? 0.0 : piece.breakpoints[k - 1];
    const double b = k == piece.breakpoints.size() ? 2.0 * kHalfWidth : piece.breakpoints[k];
    affinity += std::sqrt(std::max(piece.values[k], 0.0)) * root_mass(a - kHalfWidth, b - kHalfWidth);
  }
  return 1.0 - affinity;
}

Verdict cv_pipeline() {
  const auto net = make_interval(2.0 * kHalfWidth);
  const auto grid = log_grid(0.006, 0.1, 12);
  int wins = 0;
  std::vector<double> chosen;
  for (std::uint64_t run = 0; run < 50; ++run) {
    Rng rng(seed_for(99, run));
    std::vector<NetworkPoint> pts;
    while (pts.size() < 100) {
      const double x = rng.normal();
      if (std::abs(x) < kHalfWidth) pts.push_back({0, x + kHalfWidth});
    }
    const auto report = cv_select(net, pts, grid, 20, run);
    const auto selected = fit(net, pts, report.chosen_lambda());
    const auto floor = fit(net, pts, grid.front());
    if (h2_to_normal(selected.estimate) < h2_to_normal(floor.estimate)) ++wins;
    chosen.push_back(report.chosen_lambda());
  }
  std::sort(chosen.begin(), chosen.end());
  return {wins >= 40, fmt("CV beats lambda %.3g in %d/50 runs (median chosen lambda %.4g)", grid.front(), wins,
                          chosen[chosen.size() / 2])};
}

struct Sandbox {
  fs::path dir = fs::temp_directory_path() / ("fde_acceptance_" + std::to_string(::getpid()));
  Sandbox() { fs::create_directories(dir); }
  ~Sandbox() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Verdict determinism_round_trip() {
  Sandbox box;
  std::mt19937_64 rng(13);
  std::size_t mismatches = 0, cases = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto net = test::random_network(rng, 10);
    const auto pts = test::uniform_points(net, 60, rng);
    const std::string net_text = io::network_to_json(net);
    const auto net_back = io::parse_network(net_text);
    const std::string obs_text = io::observations_to_csv(net, pts);
    const auto r = fit(net, pts, 0.05);
    io::EstimateMetadata meta;
    meta.lambda = 0.05;
    meta.n = pts.size();
    meta.dof = count_dof(r.estimate);
    meta.objective = r.solution.primal_objective;
    meta.duality_gap = r.solution.duality_gap;
    meta.iterations = r.solution.iterations;
    meta.converged = r.solution.converged();
    const std::string est_text = io::estimate_to_json(r.estimate, meta);
    const auto est_back = io::parse_estimate(est_text);
    cases += 3;
    if (!(net_back == net) || io::network_to_json(net_back) != net_text) ++mismatches;
    if (io::parse_observations(obs_text, net) != pts) ++mismatches;
    if (!(est_back.estimate == r.estimate) || io::estimate_to_json(est_back.estimate, est_back.metadata) != est_text) {
      ++mismatches;
    }
    if (rep == 0) {
      io::write_file(box.path("net.json"), net_text);
      io::write_file(box.path("obs.csv"), obs_text);
      io::write_file(box.path("est.json"), est_text);
    }
  }

  const auto line = make_interval(1.0);
  io::write_file(box.path("line.json"), io::network_to_json(line));
  const PiecewiseConstantFn step(line, {{{0.5}, {0.5, 1.5}}}, {0.5, 1.5});
  io::write_file(box.path("step.json"), io::estimate_to_json(step.as_density()));
  io::write_file(box.path("line_obs.csv"), io::observations_to_csv(line, sample(step.as_density(), 80, 1)));

  const std::vector<std::vector<std::string>> commands{
      {"fit", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--lambda", "0.05", "--out", "@"},
      {"cv", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--folds", "5", "--seed", "4",
       "--fold-details", "@.folds.csv", "--out", "@", "--estimate-out", "@.json"},
      {"ic", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--criterion", "AIC", "--out", "@",
       "--estimate-out", "@.json", "--refit-mle"},
      {"eval", "--estimate", box.path("est.json"), "--metric", "loglik", "--obs", box.path("obs.csv")},
      {"embed", "--network", box.path("net.json"), "--estimate", box.path("est.json"), "--out", "@"},
      {"sample", "--density", box.path("est.json"), "--n", "50", "--seed", "8", "--out", "@"},
      {"rate", "--truth", box.path("step.json"), "--sizes", "50,100", "--reps", "3", "--seed", "2", "--out", "@"},
      {"plot", "--estimate", box.path("step.json"), "--obs", box.path("line_obs.csv"), "--truth",
       box.path("step.json"), "--out", "@"},
  };
  std::size_t failed_commands = 0, differing = 0;
  for (const auto& base : commands) {
    std::vector<std::string> outputs[2];
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::string> args{"fde"};
      const std::string target = box.path("run" + std::to_string(pass));
      std::vector<std::string> files;
      for (const auto& a : base) {
        if (a.rfind('@', 0) == 0) {
          args.push_back(target + a.substr(1));
          files.push_back(args.back());
        } else {
          args.push_back(a);
        }
      }
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) {
        ++failed_commands;
        std::fprintf(stderr, "%s: %s", base[0].c_str(), err.str().c_str());
      }
      outputs[pass].push_back(out.str());
      for (const auto& f : files) outputs[pass].push_back(fs::exists(f) ? io::read_file(f) : std::string());
    }
    if (outputs[0] != outputs[1]) ++differing;
  }
  const bool pass = mismatches == 0 && failed_commands == 0 && differing == 0;
  return {pass, fmt("%zu/%zu round trips exact, %zu commands rerun: %zu failed, %zu differ", cases - mismatches, cases,
                    commands.size(), failed_commands, differing)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"existence threshold", existence_threshold},
      {"normalization", normalization},
      {"duality and KKT", duality_kkt},
      {"oracle equivalence", oracle_equivalence},
      {"ordering property", ordering_property},
      {"underfit limit", underfit_limit},
      {"scale equivariance", scale_equivariance},
      {"DFS embedding", dfs_embedding},
      {"univariate Hellinger rate", univariate_rate},
      {"network Hellinger rate", network_rate},
      {"solver scale", solver_scale},
      {"CV pipeline", cv_pipeline},
      {"determinism and round trip", determinism_round_trip},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
