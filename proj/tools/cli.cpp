#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>

#include "fde/assemble.hpp"
#include "fde/embedding.hpp"
#include "fde/error.hpp"
#include "fde/io.hpp"
#include "fde/select.hpp"
#include "fde/simulate.hpp"
#include "fde/solver.hpp"

namespace fde::cli {

namespace {

struct SettingsFlags {
  double rho = 1.0;
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  std::size_t max_iterations = 200000;
  double alpha = 1.6;
  bool no_adaptive_rho = false;
  bool no_polish = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--rho", rho, "Initial ADMM penalty")->capture_default_str();
    cmd->add_option("--eps-abs", eps_abs, "Absolute tolerance")->capture_default_str();
    cmd->add_option("--eps-rel", eps_rel, "Relative tolerance")->capture_default_str();
    cmd->add_option("--max-iter", max_iterations, "Iteration limit")->capture_default_str();
    cmd->add_option("--alpha", alpha, "Over-relaxation in [1, 2)")->capture_default_str();
    cmd->add_flag("--no-adaptive-rho", no_adaptive_rho, "Keep rho fixed");
    cmd->add_flag("--no-polish", no_polish, "Skip the active-set polishing step");
  }

  SolverSettings get() const {
    SolverSettings s;
    s.rho = rho;
    s.eps_abs = eps_abs;
    s.eps_rel = eps_rel;
    s.max_iterations = max_iterations;
    s.alpha = alpha;
    s.adaptive_rho = !no_adaptive_rho;
    s.polish = !no_polish;
    s.validate();
    return s;
  }
};

std::string g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

io::EstimateMetadata metadata_of(const FitResult& r, bool refit) {
  io::EstimateMetadata m;
  m.lambda = r.qp.lambda;
  m.n = r.qp.observations.n;
  m.dof = count_dof(r.estimate);
  m.objective = r.solution.primal_objective;
  m.duality_gap = r.solution.duality_gap;
  m.iterations = r.solution.iterations;
  m.converged = r.solution.converged();
  m.nonpositive = r.solution.nonpositive;
  m.refit = refit;
  return m;
}

void report_fit(std::ostream& err, const FitResult& r) {
  const auto& s = r.solution;
  err << "lambda " << g12(r.qp.lambda) << "  n " << r.qp.observations.n << "  iterations " << s.iterations
      << (s.converged() ? "" : " (limit reached)") << "\n"
      << "objective " << g12(s.primal_objective) << "  gap " << g12(s.duality_gap) << "  mass "
      << g12(s.mass) << "  min value " << g12(s.min_value) << "  regions " << s.fused_regions << "\n";
  if (s.nonpositive) err << "warning: nonpositive segment value in the solution\n";
}

// Writes the estimate (refitted on request) and returns the exit code.
int write_fit(const FitResult& r, std::span<const NetworkPoint> points, bool refit, const std::string& path,
              std::ostream& err) {
  report_fit(err, r);
  if (refit) {
    const auto refitted = refit_mle(r.estimate, points);
    auto meta = metadata_of(r, true);
    meta.dof = count_dof(refitted);
    io::write_file(path, io::estimate_to_json(refitted, meta));
  } else {
    io::write_file(path, io::estimate_to_json(r.estimate, metadata_of(r, false)));
  }
  return r.solution.converged() ? kOk : kMaxIterations;
}

std::vector<NetworkPoint> load_points(const std::string& path, const GeometricNetwork& net, double merge_eps) {
  auto points = io::parse_observations(io::read_file(path), net);
  if (merge_eps > 0.0) {
    // Apply the same snapping as the assembly so that evaluation and refits
    // see the merged locations.
    for (auto& p : points) {
      const double len = net.length(p.edge);
      if (p.offset <= 0.5 * merge_eps) {
        p.offset = 0.0;
      } else if (p.offset >= len - 0.5 * merge_eps) {
        p.offset = len;
      } else {
        p.offset = std::clamp(std::round(p.offset / merge_eps) * merge_eps, 0.0, len);
      }
    }
  }
  return points;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : io::parse_real_list(text)) {
    if (v < 1.0 || v != std::floor(v)) throw Error(ErrorCode::InvalidInput, "sample sizes must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fused density estimation on geometric networks", "fde"};
  app.require_subcommand(1);

  // fit
  struct {
    std::string network, obs, out;
    double lambda = 0.0;
    double merge_eps = 0.0;
    bool refit = false;
    SettingsFlags settings;
  } fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the estimator at one penalty");
  fit_cmd->add_option("--network", fit_args.network, "Network JSON")->required();
  fit_cmd->add_option("--obs", fit_args.obs, "Observations CSV (edge_id,offset)")->required();
  fit_cmd->add_option("--lambda", fit_args.lambda, "Penalty")->required();
  fit_cmd->add_option("--out", fit_args.out, "Estimate JSON to write")->required();
  fit_cmd->add_option("--merge-eps", fit_args.merge_eps, "Snap offsets to this grid before fitting");
  fit_cmd->add_flag("--refit-mle", fit_args.refit, "Replace values by the MLE on the fused regions");
  fit_args.settings.attach(fit_cmd);

  // cv and ic
  struct {
    std::string network, obs, out, estimate_out, fold_details, grid, criterion = "BIC";
    std::size_t folds = 20;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    bool refit = false;
    SettingsFlags settings;
  } sel_args;
  auto attach_selection = [&](CLI::App* cmd) {
    cmd->add_option("--network", sel_args.network, "Network JSON")->required();
    cmd->add_option("--obs", sel_args.obs, "Observations CSV")->required();
    cmd->add_option("--grid", sel_args.grid, "Comma-separated penalties (default: 12 log-spaced in [0.006, 0.1])");
    cmd->add_option("--out", sel_args.out, "Selection CSV to write")->required();
    cmd->add_option("--estimate-out", sel_args.estimate_out, "Estimate JSON at the chosen penalty");
    cmd->add_flag("--refit-mle", sel_args.refit, "Refit the chosen estimate by restricted MLE");
    sel_args.settings.attach(cmd);
  };
  auto* cv_cmd = app.add_subcommand("cv", "Choose the penalty by K-fold cross-validation");
  attach_selection(cv_cmd);
  cv_cmd->add_option("--folds", sel_args.folds, "Number of folds")->capture_default_str();
  cv_cmd->add_option("--seed", sel_args.seed, "Shuffle seed")->capture_default_str();
  cv_cmd->add_option("--threads", sel_args.threads, "Worker threads")->capture_default_str();
  cv_cmd->add_option("--fold-details", sel_args.fold_details, "Per-fold CSV to write");
  auto* ic_cmd = app.add_subcommand("ic", "Choose the penalty by an information criterion");
  attach_selection(ic_cmd);
  ic_cmd->add_option("--criterion", sel_args.criterion, "AIC or BIC")
      ->check(CLI::IsMember({"AIC", "BIC"}, CLI::ignore_case))
      ->capture_default_str();

  // eval
  struct {
    std::string estimate, against, metric = "hellinger", obs;
  } eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Print a metric with 12 significant digits");
  eval_cmd->add_option("--estimate", eval_args.estimate, "Estimate JSON")->required();
  eval_cmd->add_option("--against", eval_args.against, "Second estimate JSON (hellinger)");
  eval_cmd->add_option("--metric", eval_args.metric, "hellinger, tv or loglik")
      ->check(CLI::IsMember({"hellinger", "tv", "loglik"}))
      ->capture_default_str();
  eval_cmd->add_option("--obs", eval_args.obs, "Observations CSV (loglik)");

  // embed
  struct {
    std::string network, estimate, out;
  } embed_args;
  auto* embed_cmd = app.add_subcommand("embed", "Depth-first linearization of a network");
  embed_cmd->add_option("--network", embed_args.network, "Network JSON")->required();
  embed_cmd->add_option("--estimate", embed_args.estimate, "Estimate JSON to carry onto the line");
  embed_cmd->add_option("--out", embed_args.out, "Embedding JSON to write")->required();

  // sample
  struct {
    std::string density, out;
    std::size_t n = 0;
    std::uint64_t seed = 0;
  } sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Draw points from a piecewise-constant density");
  sample_cmd->add_option("--density", sample_args.density, "Estimate JSON flagged as a density")->required();
  sample_cmd->add_option("--n", sample_args.n, "Number of points")->required();
  sample_cmd->add_option("--seed", sample_args.seed, "Seed")->capture_default_str();
  sample_cmd->add_option("--out", sample_args.out, "Observations CSV to write")->required();

  // rate
  struct {
    std::string truth, sizes = "100,316,1000,3162,10000", out;
    std::size_t reps = 20;
    std::uint64_t seed = 0;
    double scale = 0.05, reference_n = 100.0, exponent = -2.0 / 3.0;
    unsigned threads = 1;
    SettingsFlags settings;
  } rate_args;
  auto* rate_cmd = app.add_subcommand("rate", "Monte-Carlo Hellinger rate experiment");
  rate_cmd->add_option("--truth", rate_args.truth, "True density (estimate JSON)")->required();
  rate_cmd->add_option("--sizes", rate_args.sizes, "Increasing sample sizes")->capture_default_str();
  rate_cmd->add_option("--reps", rate_args.reps, "Replications per size")->capture_default_str();
  rate_cmd->add_option("--seed", rate_args.seed, "Master seed")->capture_default_str();
  rate_cmd->add_option("--lambda-scale", rate_args.scale, "lambda at the reference size")->capture_default_str();
  rate_cmd->add_option("--reference-n", rate_args.reference_n, "Reference size")->capture_default_str();
  rate_cmd->add_option("--lambda-exponent", rate_args.exponent, "Power of n / reference")->capture_default_str();
  rate_cmd->add_option("--threads", rate_args.threads, "Worker threads")->capture_default_str();
  rate_cmd->add_option("--out", rate_args.out, "Rate CSV to write")->required();
  rate_args.settings.attach(rate_cmd);

  // plot
  struct {
    std::string estimate, out, obs, truth, title;
    bool embed = false;
  } plot_args;
  auto* plot_cmd = app.add_subcommand("plot", "Step-function SVG");
  plot_cmd->add_option("--estimate", plot_args.estimate, "Estimate JSON")->required();
  plot_cmd->add_option("--out", plot_args.out, "SVG to write")->required();
  plot_cmd->add_option("--obs", plot_args.obs, "Observations CSV for a rug");
  plot_cmd->add_option("--truth", plot_args.truth, "Estimate JSON drawn dashed");
  plot_cmd->add_option("--title", plot_args.title, "Title text");
  plot_cmd->add_flag("--embed", plot_args.embed, "Linearize a network estimate first");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kFailure;
  }

  try {
    if (*fit_cmd) {
      const auto net = io::parse_network(io::read_file(fit_args.network));
      const auto points = load_points(fit_args.obs, net, fit_args.merge_eps);
      const auto r = fit(net, build_observations(net, points), fit_args.lambda, fit_args.settings.get());
      return write_fit(r, points, fit_args.refit, fit_args.out, err);
    }

    if (*cv_cmd || *ic_cmd) {
      const auto net = io::parse_network(io::read_file(sel_args.network));
      const auto points = io::parse_observations(io::read_file(sel_args.obs), net);
      const auto grid = sel_args.grid.empty() ? log_grid(0.006, 0.1, 12) : io::parse_real_list(sel_args.grid);
      const auto settings = sel_args.settings.get();
      SelectionReport report;
      if (*cv_cmd) {
        report = cv_select(net, points, grid, sel_args.folds, sel_args.seed, settings, sel_args.threads);
      } else {
        const Criterion c = (sel_args.criterion == "AIC" || sel_args.criterion == "aic") ? Criterion::AIC
                                                                                          : Criterion::BIC;
        report = ic_select(net, points, grid, c, settings);
      }
      io::write_file(sel_args.out, io::selection_to_csv(report));
      if (!sel_args.fold_details.empty()) io::write_file(sel_args.fold_details, io::folds_to_csv(report));
      for (const auto& e : report.entries) {
        if (!e.note.empty()) err << "lambda " << g12(e.lambda) << ": " << e.note << "\n";
      }
      if (!report.chosen) {
        err << "no feasible penalty on the grid\n";
        return kLambdaTooSmall;
      }
      err << "chosen lambda " << g12(report.chosen_lambda()) << "\n";
      if (sel_args.estimate_out.empty()) return kOk;
      const auto r = fit(net, build_observations(net, points), report.chosen_lambda(), settings);
      return write_fit(r, points, sel_args.refit, sel_args.estimate_out, err);
    }

    if (*eval_cmd) {
      const auto a = io::parse_estimate(io::read_file(eval_args.estimate)).estimate;
      double value = 0.0;
      if (eval_args.metric == "hellinger") {
        if (eval_args.against.empty()) throw Error(ErrorCode::InvalidInput, "hellinger needs --against");
        const auto b = io::parse_estimate(io::read_file(eval_args.against)).estimate;
        value = hellinger_sq(a, b);
      } else if (eval_args.metric == "tv") {
        value = tv(a);
      } else {
        if (eval_args.obs.empty()) throw Error(ErrorCode::InvalidInput, "loglik needs --obs");
        const auto points = io::parse_observations(io::read_file(eval_args.obs), a.network());
        value = mean_log_likelihood(a, points);
      }
      out << g12(value) << "\n";
      return kOk;
    }

    if (*embed_cmd) {
      const auto net = io::parse_network(io::read_file(embed_args.network));
      const auto embedding = dfs_embed(net);
      std::optional<PiecewiseConstantFn> line;
      if (!embed_args.estimate.empty()) {
        const auto f = io::parse_estimate(io::read_file(embed_args.estimate)).estimate;
        line = embed_function(embedding, f);
        if (f.is_density()) line = line->as_density(1e-6);
      }
      io::write_file(embed_args.out, io::embedding_to_json(embedding, line));
      return kOk;
    }

    if (*sample_cmd) {
      const auto f = io::parse_estimate(io::read_file(sample_args.density)).estimate;
      const auto points = sample(f, sample_args.n, sample_args.seed);
      io::write_file(sample_args.out, io::observations_to_csv(f.network(), points));
      return kOk;
    }

    if (*rate_cmd) {
      const auto truth = io::parse_estimate(io::read_file(rate_args.truth)).estimate;
      const auto sizes = parse_sizes(rate_args.sizes);
      const PowerLambdaRule rule{rate_args.scale, rate_args.reference_n, rate_args.exponent};
      const auto report = rate_experiment(truth, sizes, rate_args.reps, rule, rate_args.seed,
                                          rate_args.settings.get(), rate_args.threads);
      io::write_file(rate_args.out, io::rate_to_csv(report));
      if (report.has_slope) err << "slope " << g12(report.slope) << "\n";
      std::size_t unconverged = 0;
      for (const auto& row : report.rows) unconverged += row.unconverged;
      return unconverged == 0 ? kOk : kMaxIterations;
    }

    if (*plot_cmd) {
      auto f = io::parse_estimate(io::read_file(plot_args.estimate)).estimate;
      io::PlotOptions options;
      options.title = plot_args.title;
      std::optional<PiecewiseConstantFn> truth;
      if (!plot_args.truth.empty()) truth = io::parse_estimate(io::read_file(plot_args.truth)).estimate;
      std::vector<NetworkPoint> points;
      if (!plot_args.obs.empty()) points = io::parse_observations(io::read_file(plot_args.obs), f.network());

      if (plot_args.embed) {
        const auto embedding = dfs_embed(f.network());
        for (const auto& p : points) options.observations.push_back(embed_point(embedding, p));
        if (truth) truth = embed_function(embedding, *truth);
        f = embed_function(embedding, f);
      } else {
        if (f.network().edge_count() != 1) {
          throw Error(ErrorCode::InvalidInput, "estimate has several edges; pass --embed");
        }
        for (const auto& p : points) options.observations.push_back(p.offset);
      }
      options.truth = truth;
      io::write_file(plot_args.out, io::plot_svg(f, options));
      return kOk;
    }
  } catch (const LambdaTooSmall& e) {
    err << "error: " << e.what() << "\n";
    return kLambdaTooSmall;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace fde::cli
