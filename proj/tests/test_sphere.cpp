#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "newtframe/sphere.hpp"

using namespace newtframe;

namespace {

Vec3 random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), d == 2 ? 0.0 : g(rng));
  while (v.norm() < 1e-8) v = Vec3(g(rng), g(rng), d == 2 ? 0.0 : g(rng));
  return normalized_point(v);
}

// independent greedy packing on a fine circle grid
std::vector<double> circle_packing_oracle(double delta, int grid) {
  std::vector<double> chosen;
  for (int i = 0; i < grid; ++i) {
    const double phi = 2.0 * kPi * i / grid;
    bool ok = true;
    for (double c : chosen) {
      double gap = std::abs(phi - c);
      gap = std::min(gap, 2.0 * kPi - gap);
      if (gap < delta) {
        ok = false;
        break;
      }
    }
    if (ok) chosen.push_back(phi);
  }
  return chosen;
}

}  // namespace

TEST_CASE("geodesic distance basics") {
  const Vec3 e1(1, 0, 0), e2(0, 1, 0);
  CHECK(geodesic_distance(e1, e1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(geodesic_distance(e1, Vec3(-1, 0, 0)) == doctest::Approx(kPi));
  CHECK(geodesic_distance(e1, e2) == doctest::Approx(kPi / 2));

  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const Vec3 x = random_unit(rng, 3), y = random_unit(rng, 3), z = random_unit(rng, 3);
    CHECK(geodesic_distance(x, y) == doctest::Approx(geodesic_distance(y, x)));
    CHECK(geodesic_distance(x, z) <=
          geodesic_distance(x, y) + geodesic_distance(y, z) + 1e-12);
  }
}

TEST_CASE("cap areas") {
  // d=3, r=pi/2: 2 pi int_0^{pi/2} sin = 2 pi
  CHECK(cap_area(3, kPi / 2) == doctest::Approx(2.0 * kPi).epsilon(1e-12));
  CHECK(cap_area(2, 0.3) == doctest::Approx(0.6));
  for (int d = 2; d <= 5; ++d)
    CHECK(cap_area(d, kPi) == doctest::Approx(sphere_area(d)).epsilon(1e-10));
  CHECK(sphere_area(2) == doctest::Approx(2.0 * kPi));
  CHECK(sphere_area(3) == doctest::Approx(4.0 * kPi));

  // monotone in r
  double prev = 0.0;
  for (double r = 0.1; r <= kPi; r += 0.1) {
    const double a = cap_area(3, std::min(r, kPi));
    CHECK(a >= prev);
    prev = a;
  }

  // ratio bound (2.24): |B(r1)|/|B(r2)| <= (r1/r2)^{d-1} for r2 <= r1
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(1e-3, kPi);
  for (int d : {2, 3, 4}) {
    for (int t = 0; t < 100; ++t) {
      double r1 = unif(rng), r2 = unif(rng);
      if (r2 > r1) std::swap(r1, r2);
      CHECK(cap_area(d, r1) / cap_area(d, r2) <=
            std::pow(r1 / r2, d - 1) * (1.0 + 1e-10));
    }
  }
}

TEST_CASE("circle nets are exact equispaced") {
  // delta = pi/2 -> 4 equispaced angles, matching the independent packing oracle
  MaximalNet net = build_maximal_net_delta(2, kPi / 2);
  CHECK(static_cast<int>(net.nodes.size()) == 4);
  CHECK(circle_packing_oracle(kPi / 2, 4096).size() == net.nodes.size());

  // separation >= delta and covering <= delta on a fine grid
  net = build_maximal_net(2, 3, 0.75);  // delta = 0.1875
  for (std::size_t i = 0; i < net.nodes.size(); ++i)
    for (std::size_t k = i + 1; k < net.nodes.size(); ++k)
      CHECK(geodesic_distance(net.nodes[i], net.nodes[k]) >= net.delta - 1e-12);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x = circle_point(2.0 * kPi * i / 2000.0);
    CHECK(net.distance_to_net(x) <= net.delta + 1e-12);
  }
}

TEST_CASE("d=3 net: antipodal pair at delta = pi") {
  MaximalNet net = build_maximal_net_delta(3, kPi);
  REQUIRE(net.nodes.size() == 2);
  CHECK(geodesic_distance(net.nodes[0], net.nodes[1]) == doctest::Approx(kPi).epsilon(1e-10));
  // brute-force cover check on a fine grid
  for (const Vec3& x : equal_area_grid_s2(20000))
    CHECK(std::min(geodesic_distance(x, net.nodes[0]), geodesic_distance(x, net.nodes[1])) <=
          kPi + 1e-12);
}

TEST_CASE("delta formula at j=0, gamma=1") {
  MaximalNet net = build_maximal_net(3, 0, 1.0);
  CHECK(net.delta == doctest::Approx(2.0));
  for (std::size_t i = 0; i < net.nodes.size(); ++i)
    for (std::size_t k = i + 1; k < net.nodes.size(); ++k)
      CHECK(geodesic_distance(net.nodes[i], net.nodes[k]) >= 2.0 - 1e-12);
}

TEST_CASE("d=3 net invariants at j=2") {
  MaximalNet net = build_maximal_net(3, 2, 0.5);
  CHECK(net.delta == doctest::Approx(0.25));
  // separation
  for (std::size_t i = 0; i < net.nodes.size(); ++i)
    for (std::size_t k = i + 1; k < net.nodes.size(); ++k)
      CHECK(geodesic_distance(net.nodes[i], net.nodes[k]) >= net.delta - 1e-12);
  // covering on 10^4 random points (candidate-grid slack allowed)
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t)
    worst = std::max(worst, net.distance_to_net(random_unit(rng, 3)));
  CHECK(worst <= net.delta + net.cover_slack);

  // node count <= c (gamma^{-1} 2^j)^{d-1} with a modest c
  CHECK(static_cast<double>(net.nodes.size()) <=
        6.0 * std::pow(2.0 * std::ldexp(1.0, net.level), 2));

  build_partition(net);
  // partition sums to the sphere area by construction of the counting grid
  double total = 0.0;
  for (double w : net.cell_measures) total += w;
  CHECK(total == doctest::Approx(sphere_area(3)).epsilon(1e-12));

  // every node owns its own cell
  for (int i = 0; i < static_cast<int>(net.nodes.size()); ++i)
    CHECK(net.cell_of(net.nodes[i]) == i);

  // cells sit inside B(zeta, delta+slack); points near a node belong to it
  for (int t = 0; t < 2000; ++t) {
    const Vec3 x = random_unit(rng, 3);
    const int owner = net.cell_of(x);
    CHECK(geodesic_distance(x, net.nodes[owner]) <= net.delta + net.cover_slack);
  }

  // two-sided cell-measure bound (2.15) with fitted constant reported
  const double scale = std::pow(net.delta, 2);
  double cmin = 1e300, cmax = 0.0;
  for (double w : net.cell_measures) {
    cmin = std::min(cmin, w / scale);
    cmax = std::max(cmax, w / scale);
  }
  CHECK(cmin > 0.05);
  CHECK(cmax < 4.0);
  MESSAGE("cell measure / delta^{d-1} in [", cmin, ", ", cmax, "]");
}

TEST_CASE("d=2 partition measures: 4 nodes -> pi/2 arcs") {
  MaximalNet net = build_maximal_net_delta(2, kPi / 2);
  REQUIRE(net.nodes.size() == 4);
  build_partition(net);
  for (double w : net.cell_measures) CHECK(w == doctest::Approx(kPi / 2).epsilon(1e-12));

  // B(zeta, delta/2) subset A_zeta: points within delta/2 of a node map to it
  for (int i = 0; i < static_cast<int>(net.nodes.size()); ++i) {
    const double phi0 = std::atan2(net.nodes[i].y(), net.nodes[i].x());
    for (double off : {-0.49, -0.2, 0.2, 0.49}) {
      const Vec3 x = circle_point(phi0 + off * net.delta);
      CHECK(net.cell_of(x) == i);
    }
  }
}

TEST_CASE("net JSON round trip") {
  MaximalNet net = build_maximal_net(3, 1, 0.5);
  build_partition(net);
  const std::string repr = net.to_json();
  MaximalNet back = MaximalNet::from_json(repr);
  REQUIRE(back.nodes.size() == net.nodes.size());
  CHECK(back.to_json() == repr);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const Vec3 x = random_unit(rng, 3);
    CHECK(back.cell_of(x) == net.cell_of(x));
  }
}
