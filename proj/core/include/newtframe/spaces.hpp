#pragma once

#include <vector>

#include "newtframe/needlet.hpp"

namespace newtframe {

// Smoothness parameters (s, p, q); tau sits on the Sobolev-type embedding
// line 1/tau = s/(d-1) + 1/p.
struct SmoothnessTriple {
  double s = 0.0;
  double p = 2.0;
  double q = 2.0;

  double tau(int d) const { return 1.0 / (s / (d - 1) + 1.0 / p); }
  bool admissible(double A) const {
    return std::abs(s) <= A && p >= 1.0 / A && p <= A && q >= 1.0 / A && std::isfinite(q);
  }
};

// Sparse frame-coefficient sequence, level-grouped.
struct CoeffSeq {
  struct Item {
    NodeIndex idx;
    double value;
  };
  std::vector<Item> items;  // ascending (level, ordinal)
};

CoeffSeq make_coeff_seq(const NeedletFrame& frame, const std::vector<double>& dense,
                        double drop_tol = 0.0);

// Besov sequence norm (3.24):
// ( sum_j [ 2^{j(s + (d-1)(1/2 - 1/p))} ( sum_{xi in level j} |h|^p )^{1/p} ]^q )^{1/q}
double seq_besov_norm(const CoeffSeq& h, const SmoothnessTriple& t, int d);

// Triebel-Lizorkin sequence norm (3.25) via cap indicators on a grid whose
// resolution is grid_factor times the finest cap radius.
double seq_tl_norm(const CoeffSeq& h, const SmoothnessTriple& t, int d,
                   const std::vector<Vec3>& centers, double gamma, int grid_factor = 4);

// Function-space norm via Phi_j * f blocks (Definition 3.5). kind: 'B' | 'F'.
// p = q = 2 uses the exact coefficient-side route; otherwise grid quadrature.
double function_space_norm(const SHExpansion& f, const SmoothnessTriple& t, char kind,
                           const CutoffPair& cutoff);

// ||sup_{0<=r<1} |U(r .)|||_p estimated on radii 1 - 2^{-l}, l <= l_max.
double hardy_norm_estimate(const SHExpansion& boundary, double p, int l_max = 6,
                           int angular_n = 0);

}  // namespace newtframe
