#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "smc/errors.hpp"
#include "smc/rng.hpp"
#include "smc/sobol.hpp"

using namespace smc;

namespace {

// reference: first 10 points of the standard sequence (zero point dropped),
// cross-checked against scipy.stats.qmc.Sobol(d, scramble=False)
const double kRef2[10][2] = {
    {0.5, 0.5},       {0.75, 0.25},     {0.25, 0.75},    {0.375, 0.375},
    {0.875, 0.875},   {0.625, 0.125},   {0.125, 0.625},  {0.1875, 0.3125},
    {0.6875, 0.8125}, {0.9375, 0.0625},
};

const double kRef5[10][5] = {
    {0.5, 0.5, 0.5, 0.5, 0.5},
    {0.75, 0.25, 0.25, 0.25, 0.75},
    {0.25, 0.75, 0.75, 0.75, 0.25},
    {0.375, 0.375, 0.625, 0.875, 0.375},
    {0.875, 0.875, 0.125, 0.375, 0.875},
    {0.625, 0.125, 0.875, 0.625, 0.625},
    {0.125, 0.625, 0.375, 0.125, 0.125},
    {0.1875, 0.3125, 0.9375, 0.4375, 0.5625},
    {0.6875, 0.8125, 0.4375, 0.9375, 0.0625},
    {0.9375, 0.0625, 0.6875, 0.1875, 0.3125},
};

// sup over boxes [0,x) of |empirical - volume|, x ranging over the grid of
// point coordinates plus 1; open and closed counts bracket the sup.
double star_discrepancy_2d(const Matrix& pts) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < pts.rows; ++i) {
    xs.push_back(pts(i, 0));
    ys.push_back(pts(i, 1));
  }
  xs.push_back(1.0);
  ys.push_back(1.0);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  const double n = double(pts.rows);
  double worst = 0.0;
  for (double xa : xs) {
    for (double yb : ys) {
      int open = 0, closed = 0;
      for (std::size_t i = 0; i < pts.rows; ++i) {
        bool in_open = pts(i, 0) < xa && pts(i, 1) < yb;
        bool in_closed = pts(i, 0) <= xa && pts(i, 1) <= yb;
        open += in_open;
        closed += in_closed;
      }
      double vol = xa * yb;
      worst = std::max(worst, std::abs(open / n - vol));
      worst = std::max(worst, std::abs(closed / n - vol));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("first 10 points match the published sequence, d=2 and d=5") {
  Matrix p2 = sobol_points(10, 2);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 2; ++j) CHECK(p2(i, j) == kRef2[i][j]);

  Matrix p5 = sobol_points(10, 5);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 5; ++j) CHECK(p5(i, j) == kRef5[i][j]);
}

TEST_CASE("zero point skipped: first point is the cube center in every dim") {
  Matrix p = sobol_points(1, 32);
  for (int j = 0; j < 32; ++j) CHECK(p(0, j) == 0.5);
}

TEST_CASE("one-dimensional projections equidistribute over dyadic grids") {
  // first 2^m points (the skipped zero plus 2^m - 1 generated) hit every
  // multiple of 2^-m exactly once in each coordinate
  const int m = 6;
  const std::size_t cnt = (1u << m) - 1;
  for (std::size_t d : {1u, 2u, 3u, 8u, 16u, 32u}) {
    Matrix p = sobol_points(cnt, d);
    for (std::size_t j = 0; j < d; ++j) {
      std::set<double> vals{0.0};  // the skipped origin
      for (std::size_t i = 0; i < cnt; ++i) vals.insert(p(i, j));
      CHECK(vals.size() == cnt + 1);
      std::size_t idx = 0;
      for (double v : vals) {
        CHECK(v == double(idx) / double(1u << m));
        ++idx;
      }
    }
  }
}

TEST_CASE("unsupported dimensions throw") {
  CHECK_THROWS_AS(SobolSequence(0), UnsupportedDimensionError);
  CHECK_THROWS_AS(SobolSequence(33), UnsupportedDimensionError);
  CHECK_NOTHROW(SobolSequence(32));
}

TEST_CASE("box scaling keeps points inside and centers the first one") {
  std::vector<double> lo{-2.0, 10.0};
  std::vector<double> hi{4.0, 11.0};
  Matrix p = sobol_points(64, 2, lo, hi);
  for (std::size_t i = 0; i < p.rows; ++i) {
    CHECK(p(i, 0) >= -2.0);
    CHECK(p(i, 0) <= 4.0);
    CHECK(p(i, 1) >= 10.0);
    CHECK(p(i, 1) <= 11.0);
  }
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(0, 1) == doctest::Approx(10.5));
}

TEST_CASE("lower star discrepancy than seeded uniform points") {
  Matrix sobol = sobol_points(256, 2);
  double d_sobol = star_discrepancy_2d(sobol);
  std::vector<double> d_unif;
  for (int s = 0; s < 20; ++s) {
    RngStream rng(1000 + s);
    Matrix u(256, 2);
    for (std::size_t i = 0; i < 256; ++i) {
      u(i, 0) = rng.u01();
      u(i, 1) = rng.u01();
    }
    d_unif.push_back(star_discrepancy_2d(u));
  }
  std::sort(d_unif.begin(), d_unif.end());
  double median = 0.5 * (d_unif[9] + d_unif[10]);
  CHECK(d_sobol < median);
}

TEST_CASE("streaming interface agrees with the batch helper") {
  SobolSequence seq(3);
  Matrix batch = sobol_points(20, 3);
  std::vector<double> pt(3);
  for (int i = 0; i < 20; ++i) {
    seq.next(pt);
    for (int j = 0; j < 3; ++j) CHECK(pt[j] == batch(i, j));
  }
}
