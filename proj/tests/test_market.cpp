#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "ppz/market.hpp"

using namespace ppz;
using namespace ppz::testing;

namespace {
ConversionModel model(std::initializer_list<double> betas, double x_max = 5.0) {
  ConversionModel m;
  m.beta = vec(betas);
  m.x_max = x_max;
  return m;
}
}  // namespace

TEST_CASE("base price converts fully") {
  ConversionModel m = model({0.3, 1.0, 2.5});
  CHECK(m.convert(vec({1, 1, 1})).isApprox(vec({1, 1, 1})));
}

TEST_CASE("conversion halves at one doubling unit when beta = ln 2") {
  ConversionModel m = model({std::log(2.0)});
  CHECK(m.convert(vec({2}))[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("conversion matches the scalar exponential") {
  ConversionModel m = model({1, 1, 1});
  Eigen::VectorXd y = m.convert(vec({1, 2, 3}));
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(std::exp(-1.0)));
  CHECK(y[2] == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("inversion at the base quantile") {
  ConversionModel m = model({0.8});
  CHECK(m.invert(vec({1}))[0] == doctest::Approx(1.0));
}

TEST_CASE("inversion recovers the doubling price") {
  ConversionModel m = model({std::log(2.0)});
  CHECK(m.invert(vec({0.25}))[0] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("invert is the inverse of convert") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> price(1.0, 5.0);
  std::uniform_real_distribution<double> decay(0.2, 3.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ConversionModel m = model({decay(rng), decay(rng), decay(rng)});
    Eigen::VectorXd x = vec({price(rng), price(rng), price(rng)});
    Eigen::VectorXd back = m.invert(m.convert(x));
    worst = std::max(worst, (back - x).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("conversion is strictly decreasing in price") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ConversionModel m = model({0.2 + unif(rng), 0.2 + unif(rng)});
    Eigen::VectorXd xa = vec({1.0 + 3.0 * unif(rng), 1.0 + 3.0 * unif(rng)});
    Eigen::VectorXd xb = xa.array() + 0.01 + unif(rng);
    Eigen::VectorXd ya = m.convert(xa), yb = m.convert(xb);
    CHECK((ya.array() > yb.array()).all());
  }
}

TEST_CASE("modulated demand never exceeds raw demand") {
  ConversionModel m = model({0.5, 1.5});
  Eigen::VectorXd d = vec({10, 3});
  Eigen::VectorXd y = m.convert(vec({1.7, 4.0}));
  CHECK((d.cwiseProduct(y).array() <= d.array()).all());
}

TEST_CASE("domain errors are rejected") {
  ConversionModel m = model({1.0});
  CHECK_THROWS(m.convert(vec({0.99})));
  CHECK_THROWS(m.invert(vec({0.0})));
  CHECK_THROWS(m.invert(vec({1.01})));
  CHECK_THROWS(m.invert(vec({-0.2})));
}

TEST_CASE("y_min tracks the price ceiling") {
  ConversionModel m = model({1.0, 2.0}, 3.0);
  CHECK(m.y_min()[0] == doctest::Approx(std::exp(-2.0)));
  CHECK(m.y_min()[1] == doctest::Approx(std::exp(-4.0)));
}

TEST_CASE("market state validation") {
  MarketState st;
  st.d = vec({1, 2});
  st.s0 = vec({1, 1});
  st.s_bar = vec({0, 0});
  st.r = vec({0, 0});
  st.f = vec({5, 5});
  st.e = vec({0, 0});
  CHECK_NOTHROW(st.validate(2));
  st.s0[0] = -1;
  CHECK_THROWS(st.validate(2));
  st.s0[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(st.validate(2));
  st.s0 = vec({1});
  CHECK_THROWS(st.validate(2));
}
