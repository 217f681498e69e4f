#pragma once

#include <functional>
#include <string>
#include <vector>

#include "newtframe/sphere.hpp"
#include "newtframe/zonal.hpp"

namespace newtframe {

// Cubature rule on S^{d-1}. `exact_degree` is certified: every spherical
// harmonic of degree <= exact_degree integrates to its exact value.
struct CubatureRule {
  int d = 3;
  int level = 0;
  double gamma = 0.5;          // gamma actually used (densified on fallback)
  int exact_degree = 0;
  std::vector<Vec3> nodes;
  std::vector<double> weights;
  double certificate = 0.0;    // max moment defect over all (k, nu) up to exact_degree

  double integrate(const std::function<double(const Vec3&)>& f) const;

  std::string to_json() const;
  static CubatureRule from_json(const std::string& text);
};

// Weights w_zeta = |A_zeta| on the net nodes; exact for constants.
CubatureRule simple_rule(const MaximalNet& net);

// Rule on a maximal delta_j-net exact for degree <= 2^{j+1}.
// d = 2: equispaced angles with equal weights (classical exactness).
// d = 3: minimum-norm correction of the partition weights to match all
//        moments, kept inside the two-sided weight band; densifies the net
//        (shrinking gamma) when the system cannot be certified.
// Throws InfeasibleError carrying the residual when every attempt fails.
CubatureRule exact_rule(int d, int level, double gamma);

// max over k <= degree, nu of |sum w Y_{k nu}(xi) - delta_{k0} sqrt(omega_d)|
double certify_exactness(const CubatureRule& rule, int degree);

}  // namespace newtframe
