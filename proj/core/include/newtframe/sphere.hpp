#pragma once

#include <optional>
#include <string>
#include <vector>

#include "newtframe/common.hpp"

namespace newtframe {

// Points live in R^3 for both supported dimensions; d = 2 keeps z = 0.
Vec3 normalized_point(const Vec3& x);
Vec3 circle_point(double phi);

double geodesic_distance(const Vec3& x, const Vec3& y);

// |B(x, r)| on S^{d-1}: omega_{d-1} * int_0^r sin^{d-2} v dv.
double cap_area(int d, double r);

// Maximal delta-net with the disjoint partition of eq.-(2.14) type:
// delta-separated nodes, delta-covering, Voronoi-style cells A_zeta with
// B(zeta, delta/2) subset A_zeta subset B(zeta, delta).
// Cells are assigned by nearest node; ties go to the lowest ordinal.
class MaximalNet {
 public:
  int d = 3;
  int level = 0;
  double gamma = 0.5;
  double delta = 0.0;                 // gamma * 2^{1-level}
  std::vector<Vec3> nodes;
  std::vector<double> cell_measures;  // w_zeta = |A_zeta|
  double cover_slack = 0.0;           // candidate-grid resolution used by the builder

  int cell_of(const Vec3& x) const;   // ordinal of the owning node
  double distance_to_net(const Vec3& x) const;
  // ordinals of nodes with rho(node, x) <= r, ascending
  std::vector<int> nodes_in_cap(const Vec3& x, double r) const;

  std::string to_json() const;
  static MaximalNet from_json(const std::string& text);

  void rebuild_search_index();

 private:
  // lat/long buckets for nearest-node queries
  int n_band_ = 0;
  std::vector<std::vector<int>> buckets_;
  int bucket_id(const Vec3& x) const;
};

// Greedy farthest-point net over a fine symmetric candidate grid
// (d = 2: exact equispaced angles; d = 3: icosahedral refinement).
MaximalNet build_maximal_net(int d, int level, double gamma);
MaximalNet build_maximal_net_delta(int d, double delta);

// Fills cell_measures: analytic arcs for d = 2, equal-measure (z, phi)
// grid counting for d = 3.
void build_partition(MaximalNet& net, int min_points_per_cell = 60);

// Icosahedral refinement grid, centrally symmetric, edge length <= target.
std::vector<Vec3> icosphere_grid(double target_edge);

// Equal-measure sampling grid on S^2 (uniform z times uniform phi),
// each point carrying measure omega_3 / size.
std::vector<Vec3> equal_area_grid_s2(std::size_t approx_size);

}  // namespace newtframe
