#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "fde/io.hpp"
#include "fde/simulate.hpp"

using namespace fde;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;

  Sandbox() {
    dir = fs::temp_directory_path() / ("fde_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string read(const std::string& name) const { return io::read_file(path(name)); }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "fde");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_inputs(const Sandbox& box) {
  const auto net = make_interval(1.0);
  io::write_file(box.path("net.json"), io::network_to_json(net));
  const auto uniform = PiecewiseConstantFn::constant(net, 1.0).as_density();
  const auto pts = sample(uniform, 100, 42);
  io::write_file(box.path("obs.csv"), io::observations_to_csv(net, pts));
  std::string distinct = "edge_id,offset\n";
  for (int i = 0; i < 100; ++i) distinct += "e," + io::format_double((i + 0.5) / 100.0) + "\n";
  io::write_file(box.path("grid.csv"), distinct);
  io::write_file(box.path("uniform.json"), io::estimate_to_json(uniform));
  const PiecewiseConstantFn half(net, {{{0.5}, {0.0, 2.0}}}, {0.0, 2.0});
  io::write_file(box.path("half.json"), io::estimate_to_json(half.as_density()));
  GeometricNetwork star({"c", "l0", "l1", "l2"},
                        {{"e0", "c", "l0", 1.0}, {"e1", "c", "l1", 2.0}, {"e2", "l2", "c", 0.5}});
  io::write_file(box.path("star.json"), io::network_to_json(star));
  io::write_file(box.path("star_uniform.json"),
                 io::estimate_to_json(PiecewiseConstantFn::constant(star, 1.0 / 3.5).as_density()));
}

}  // namespace

TEST_CASE("fit exit codes") {
  Sandbox box;
  write_inputs(box);
  auto r = run({"fit", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--lambda", "0.05", "--out",
                box.path("est.json")});
  CHECK(r.code == 0);
  CHECK(fs::exists(box.path("est.json")));
  const auto est = io::parse_estimate(box.read("est.json"));
  CHECK(est.estimate.is_density());
  CHECK(est.metadata->lambda == 0.05);

  r = run({"fit", "--network", box.path("net.json"), "--obs", box.path("grid.csv"), "--lambda", "0.004", "--out",
           box.path("x.json")});
  CHECK(r.code == 2);
  CHECK(r.err.find("threshold 0.005") != std::string::npos);

  r = run({"fit", "--network", box.path("missing.json"), "--obs", box.path("obs.csv"), "--lambda", "0.05", "--out",
           box.path("x.json")});
  CHECK(r.code == 1);

  r = run({"fit", "--network", box.path("net.json"), "--obs", box.path("grid.csv"), "--lambda", "0.01", "--max-iter",
           "2", "--no-polish", "--out", box.path("limit.json")});
  CHECK(r.code == 3);
  CHECK_FALSE(io::parse_estimate(box.read("limit.json")).metadata->converged);

  r = run({"fit", "--network", box.path("net.json"), "--obs", box.path("grid.csv"), "--lambda", "0.02",
           "--refit-mle", "--out", box.path("refit.json")});
  CHECK(r.code == 0);
  CHECK(io::parse_estimate(box.read("refit.json")).metadata->refit);

  CHECK(run({"fit", "--network", box.path("net.json")}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("selection commands") {
  Sandbox box;
  write_inputs(box);
  auto r = run({"cv", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--grid", "0.05", "--out",
                box.path("cv.csv"), "--estimate-out", box.path("cv.json")});
  CHECK(r.code == 0);
  CHECK(box.read("cv.csv").rfind("lambda,cv,dof,chosen,note\n0.050000000000000003,", 0) == 0);
  CHECK(io::parse_estimate(box.read("cv.json")).metadata->lambda == 0.05);

  r = run({"ic", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--criterion", "BIC", "--grid",
           "0.02,0.05,0.1", "--out", box.path("ic.csv")});
  CHECK(r.code == 0);
  const std::string csv = box.read("ic.csv");
  CHECK(csv.find("bic") != std::string::npos);
  CHECK(csv.find("aic") == std::string::npos);

  r = run({"ic", "--network", box.path("net.json"), "--obs", box.path("grid.csv"), "--grid", "0.001", "--out",
           box.path("none.csv")});
  CHECK(r.code == 2);
}

TEST_CASE("eval metrics") {
  Sandbox box;
  write_inputs(box);
  auto r = run({"eval", "--estimate", box.path("uniform.json"), "--against", box.path("uniform.json")});
  CHECK(r.code == 0);
  CHECK(r.out == "0\n");
  r = run({"eval", "--estimate", box.path("uniform.json"), "--against", box.path("half.json")});
  CHECK(r.out == "0.292893218813\n");
  r = run({"eval", "--estimate", box.path("uniform.json"), "--metric", "tv"});
  CHECK(r.out == "0\n");
  r = run({"eval", "--estimate", box.path("uniform.json"), "--metric", "loglik", "--obs", box.path("obs.csv")});
  CHECK(r.out == "0\n");
  r = run({"eval", "--estimate", box.path("uniform.json"), "--against", box.path("star_uniform.json")});
  CHECK(r.code == 1);
}

TEST_CASE("embed, sample, rate and plot") {
  Sandbox box;
  write_inputs(box);
  auto r = run({"embed", "--network", box.path("star.json"), "--out", box.path("emb.json")});
  CHECK(r.code == 0);
  CHECK(box.read("emb.json").find("\"total_length\": 3.5") != std::string::npos);
  r = run({"embed", "--network", box.path("star.json"), "--estimate", box.path("star_uniform.json"), "--out",
           box.path("emb2.json")});
  CHECK(r.code == 0);

  r = run({"sample", "--density", box.path("half.json"), "--n", "0", "--out", box.path("empty.csv")});
  CHECK(r.code == 0);
  CHECK(box.read("empty.csv") == "edge_id,offset\n");

  r = run({"rate", "--truth", box.path("half.json"), "--sizes", "100", "--reps", "2", "--out", box.path("rate.csv")});
  CHECK(r.code == 0);
  const std::string rate = box.read("rate.csv");
  CHECK(rate.back() == '\n');
  CHECK(rate[rate.size() - 2] == ',');  // empty slope column

  r = run({"plot", "--estimate", box.path("star_uniform.json"), "--out", box.path("p.svg")});
  CHECK(r.code == 1);
  r = run({"plot", "--estimate", box.path("star_uniform.json"), "--embed", "--out", box.path("p.svg")});
  CHECK(r.code == 0);
  r = run({"plot", "--estimate", box.path("half.json"), "--obs", box.path("obs.csv"), "--truth",
           box.path("uniform.json"), "--out", box.path("q.svg")});
  CHECK(r.code == 0);
}

TEST_CASE("every command is byte-identical on rerun") {
  Sandbox box;
  write_inputs(box);
  const std::vector<std::vector<std::string>> commands{
      {"fit", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--lambda", "0.03", "--out", "@"},
      {"cv", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--grid", "0.02,0.05", "--folds", "5",
       "--seed", "3", "--out", "@"},
      {"ic", "--network", box.path("net.json"), "--obs", box.path("obs.csv"), "--grid", "0.02,0.05", "--out", "@"},
      {"embed", "--network", box.path("star.json"), "--estimate", box.path("star_uniform.json"), "--out", "@"},
      {"sample", "--density", box.path("half.json"), "--n", "25", "--seed", "9", "--out", "@"},
      {"rate", "--truth", box.path("half.json"), "--sizes", "50,100", "--reps", "2", "--seed", "4", "--out", "@"},
      {"plot", "--estimate", box.path("half.json"), "--obs", box.path("obs.csv"), "--out", "@"},
  };
  for (const auto& base : commands) {
    std::string first;
    for (int pass = 0; pass < 2; ++pass) {
      auto args = base;
      const std::string target = box.path("out" + std::to_string(pass));
      std::replace(args.begin(), args.end(), std::string("@"), target);
      REQUIRE(run(args).code == 0);
      if (pass == 0) {
        first = io::read_file(target);
      } else {
        CHECK(io::read_file(target) == first);
      }
    }
  }
}
