#include <doctest.h>

#include <cmath>

#include "fde/density.hpp"
#include "fde/error.hpp"
#include "test_support.hpp"

using namespace fde;

namespace {

PiecewiseConstantFn two_level(double a, double b) {
  return PiecewiseConstantFn(make_interval(1.0), {{{0.5}, {a, b}}}, {a, b});
}

}  // namespace

TEST_CASE("construction rejects malformed shapes") {
  const auto net = make_interval(1.0);
  CHECK_THROWS_AS(PiecewiseConstantFn(net, {{{0.5}, {1.0}}}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(PiecewiseConstantFn(net, {{{0.6, 0.4}, {1.0, 1.0, 1.0}}}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(PiecewiseConstantFn(net, {{{1.0}, {1.0, 1.0}}}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(PiecewiseConstantFn(net, {{{}, {NAN}}}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(PiecewiseConstantFn(net, {{{}, {1.0}}}, {1.0}), Error);
}

TEST_CASE("integral and density flag") {
  const auto f = two_level(0.6, 1.4);
  CHECK(integrate(f) == doctest::Approx(1.0));
  CHECK_FALSE(f.is_density());
  CHECK(f.as_density().is_density());
  CHECK_THROWS_AS(two_level(1.0, 2.0).as_density(), Error);
  CHECK_THROWS_AS(two_level(-1.0, 3.0).as_density(), Error);
}

TEST_CASE("total variation counts node jumps") {
  const auto f = PiecewiseConstantFn(make_interval(1.0), {{{0.5}, {1.0, 3.0}}}, {2.0, 3.0});
  CHECK(tv(f) == doctest::Approx(3.0));
  CHECK(tv(PiecewiseConstantFn::constant(make_interval(2.0), 0.5)) == 0.0);
  CHECK(log_tv(two_level(1.0, std::exp(2.0))) == doctest::Approx(2.0));
  CHECK_THROWS_AS(log_tv(two_level(0.0, 2.0)), Error);
}

TEST_CASE("hellinger closed form") {
  const auto uniform = PiecewiseConstantFn::constant(make_interval(1.0), 1.0).as_density();
  const auto half = two_level(0.0, 2.0).as_density();
  CHECK(hellinger_sq(uniform, uniform) == 0.0);
  CHECK(hellinger_sq(uniform, half) == doctest::Approx(1.0 - 0.5 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(hellinger_sq(half, uniform) == doctest::Approx(hellinger_sq(uniform, half)));
  CHECK_THROWS_AS(hellinger_sq(uniform, PiecewiseConstantFn::constant(make_interval(2.0), 0.5)), Error);
}

TEST_CASE("hellinger on different breakpoints uses the common refinement") {
  const auto net = make_interval(1.0);
  const PiecewiseConstantFn f(net, {{{0.25}, {2.0, 2.0 / 3.0}}}, {2.0, 2.0 / 3.0});
  const PiecewiseConstantFn g(net, {{{0.75}, {0.8, 1.6}}}, {0.8, 1.6});
  // By hand over [0,.25], [.25,.75], [.75,1].
  const double expected = 0.5 * (0.25 * std::pow(std::sqrt(2.0) - std::sqrt(0.8), 2) +
                                 0.5 * std::pow(std::sqrt(2.0 / 3.0) - std::sqrt(0.8), 2) +
                                 0.25 * std::pow(std::sqrt(2.0 / 3.0) - std::sqrt(1.6), 2));
  CHECK(hellinger_sq(f, g) == doctest::Approx(expected).epsilon(1e-14));
  const auto [a, b] = common_refinement(f, g);
  CHECK(a.edge(0).breakpoints == std::vector<double>{0.25, 0.75});
  CHECK(b.edge(0).values == std::vector<double>{0.8, 0.8, 1.6});
}

TEST_CASE("evaluation uses the larger side at breakpoints and nodes") {
  const auto f = PiecewiseConstantFn(make_interval(1.0), {{{0.5}, {1.0, 3.0}}}, {2.0, 0.5});
  CHECK(evaluate(f, {0, 0.25}) == 1.0);
  CHECK(evaluate(f, {0, 0.5}) == 3.0);
  CHECK(evaluate(f, {0, 0.0}) == 2.0);
  CHECK(evaluate(f, {0, 1.0}) == 3.0);
}

TEST_CASE("log-likelihood clamps zero density") {
  const auto f = two_level(0.0, 2.0);
  const std::vector<NetworkPoint> pts{{0, 0.25}, {0, 0.75}};
  CHECK(mean_log_likelihood(f, pts) == doctest::Approx(0.5 * (std::log(1e-300) + std::log(2.0))));
  CHECK_THROWS_AS(mean_log_likelihood(f, std::vector<NetworkPoint>{}), Error);
}

TEST_CASE("fused partition counts regions including nodes") {
  CHECK(fused_partition(PiecewiseConstantFn::constant(make_interval(1.0), 1.0)).region_count == 1);
  CHECK(fused_partition(two_level(1.0, 3.0)).region_count == 2);
  // Node value that matches nothing forms its own region.
  const PiecewiseConstantFn f(make_interval(1.0), {{{0.5}, {1.0, 3.0}}}, {2.0, 3.0});
  CHECK(fused_partition(f).region_count == 3);
  // Values within the relative tolerance are fused.
  CHECK(fused_partition(two_level(1.0, 1.0 + 1e-9)).region_count == 1);
  CHECK(fused_partition(two_level(1.0, 1.0 + 1e-4)).region_count == 2);
}

TEST_CASE("map_values drops the density flag") {
  const auto f = two_level(0.6, 1.4).as_density();
  const auto g = f.map_values([](double v) { return 2.0 * v; });
  CHECK_FALSE(g.is_density());
  CHECK(g.edge(0).values == std::vector<double>{1.2, 2.8});
}
