#pragma once

#include <string>
#include <utility>
#include <vector>

#include "newtframe/needlet.hpp"

namespace newtframe {

// Construction parameters for the Newtonian-kernel frame atoms.
// Shipped defaults keep the operator-level smallness tests (D-matrix,
// contraction) in charge instead of the worst-case cascade, which is
// available behind `strict`.
struct ThetaParams {
  double gamma0 = 0.5;
  double gamma1 = 0.5;
  double gamma2 = 0.25;
  double gamma3 = 0.25;
  double gamma4 = 0.125;  // gamma0 / 4
  int K = 2;              // even; A > 1 overrides via K = 2 ceil(A d / 2)
  double A = 0.0;
  double M_override = 0.0;  // decay exponent; 0 means the K + d default
  bool strict = false;
  long long pole_budget = 2000000;

  double decay_M(int d) const { return M_override > 0.0 ? M_override : K + d; }
  int derivative_order(int d) const;  // m = ceil((M - d + 2)/2)
  void validate() const;
  // applies the strict cascade / A-derived K; returns the effective params
  ThetaParams resolved(int d) const;
};

// The kernel F_eps: unit-integral, positive, highly localized, and exactly a
// finite combination of radial pole-derivatives of the Newtonian kernel.
struct LocalizedKernel {
  int d = 3;
  double eps = 0.25;
  double a = 1.25;       // pole radius 1 + eps
  int m = 1;             // highest derivative order
  double M = 5.0;        // decay exponent the kernel was built for
  double kappa = 1.0;    // normalization: integral of kappa * raw = 1
  std::vector<double> b;     // fitted representation coefficients b_0..b_m
  double fit_residual = 0.0; // relative LSQ residual of the b system
  ZonalKernel zonal;         // projection of kappa * raw onto Z_k

  double raw(double u) const;                  // eps^{2m-1} (a^2+1-2au)^{1-d/2-m}
  double eval(double u) const { return kappa * raw(u); }
};

// Builds F_eps; fits b by least squares on a dense grid and records the
// residual (throws InfeasibleError above 1e-8 relative).
LocalizedKernel build_localized_kernel(int d, double eps, double M, int zonal_degree);

// Newtonian shift restricted to the sphere as a zonal kernel:
// d >= 3: |x - a zeta|^{2-d}; d = 2: ln(1/|x - a zeta|). a > 1.
ZonalKernel newton_shift_expansion(int d, double a, int max_degree);
// degree at which the geometric tail drops below `tol`
int shift_tail_degree(double a, double tol);
// analytic d^l/da^l of the degree-k shift coefficient
double shift_coeff_derivative(int d, double a, int k, int order);

// b-fit in isolation (the basis is 1 (d=2 only) plus d^l/da^l shifts).
struct BFitReport {
  std::vector<double> b;
  double rel_residual = 0.0;
};
BFitReport solve_b_coefficients(int d, double eps, int m);

// Expansion of fL_t^{K/2} into rotation words: value(zeta) =
// t^{-K} sum_w coef_w f(rot_w zeta). Coefficients sum to zero.
struct RotationWord {
  Eigen::Matrix3d rot;
  double coef;
};
std::vector<RotationWord> laplacian_words(int d, int K, double t);

struct TimeStepReport {
  double t = 0.0;
  double achieved = 0.0;   // sup |discrete - exact| over the test grid at t
  double target = 0.0;     // gamma4 N^{d-1} (1 + N pi)^{-M}
  double practical = 0.0;  // gamma4 N^{d-1}: the rho = 0 envelope budget
  bool met = false;        // the full (1 + N pi)^{-M} target was reached
  bool met_practical = false;
  int halvings = 0;
};

// Halves t from 1e-2 against the exact multiplier/derivative oracle until
// the target is met or roundoff stops improving the discrepancy; throws
// InfeasibleError only on t underflow below 1e-8 while still improving.
TimeStepReport choose_time_step(int d, int level, const ThetaParams& params,
                                const LocalizedKernel& F);

// Explicit pole/coefficient representation of theta_xi (already including
// the L2 normalization C_xi): theta(x) = a0 + sum coef_i ker(x - y_i).
struct NewtonianAtom {
  NodeIndex idx;
  int d = 3;
  double a0 = 0.0;
  std::vector<std::pair<Vec3, double>> poles;

  // build metadata
  Vec3 center = Vec3(1, 0, 0);
  double c_diamond = 1.0;
  double eps = 0.0, a = 0.0, t = 0.0, kappa = 0.0, r_xi = 0.0;
  int m = 0, K = 0;
  double M = 0.0;

  std::string to_json() const;
  static NewtonianAtom from_json(const std::string& text);
};

double atom_eval_direct(const NewtonianAtom& atom, const Vec3& x);
double atom_eval_series(const NewtonianAtom& atom, const Vec3& x);

// Shared per-level context: the simple net Z_j with weights, the kernel
// Phi_N, F_eps, the time step, and the flattened operator tables.
class ThetaLevel {
 public:
  int d = 3;
  int level = 1;
  double N = 1.0;
  ThetaParams params;
  LocalizedKernel F;
  MaximalNet znet;
  ZonalKernel phi_kernel;  // Phi_N = (-1)^{K/2} sum a(k/N) [k(k+d-2)]^{-K/2} Z_k
  ZonalKernel psi_kernel;  // Psi_N (the needlet level kernel)
  double t = 0.0;
  double r_xi = 0.0;
  TimeStepReport t_report;

  std::vector<RotationWord> words;   // fL expansion (coef excludes t^{-K})
  std::vector<double> radial_flat;   // flattened radial coefficients per k t-shift
  std::vector<double> radial_profile;  // sum_l b_l Delta_t^l lambda_k(a), k <= degree

  // (node ordinal, kappa * w_zeta * Phi_N(center . zeta)) over the truncation cap
  std::vector<std::pair<int, double>> support(const Vec3& center) const;

  // stable nested-difference evaluation of theta-diamond at x
  double theta_diamond_eval(const Vec3& center, const Vec3& x) const;
  // out += scale * theta-diamond band expansion (degree = out.max_degree)
  void add_theta_expansion(SHExpansion& out, const Vec3& center, double scale) const;
};

// Builds the level context (cutoff needed for Phi_N / Psi_N).
// expansion_degree bounds the radial profile table.
ThetaLevel build_theta_level(int d, int level, const ThetaParams& params,
                             const CutoffPair& cutoff, int expansion_degree);

NewtonianAtom compile_theta_atom(const ThetaLevel& L, NodeIndex idx, const Vec3& center,
                                 double c_diamond);

// Staged construction diagnostics for one atom: sup-norm gaps between the
// consecutive approximations psi -> h1 -> h2 -> h3 -> theta-diamond.
struct DiamondReport {
  double psi_h1 = 0.0;
  double h1_h2 = 0.0;
  double h2_h3 = 0.0;
  double h3_theta = 0.0;
  double envelope_ratio = 0.0;  // max |psi - theta| (1+N rho)^M / N^{d-1}
  // the same weighted ratio per stage, to attribute the envelope budget
  double env_psi_h1 = 0.0;
  double env_h1_h2 = 0.0;
  double env_h2_h3 = 0.0;
  double env_h3_theta = 0.0;
};
DiamondReport diamond_pipeline(const ThetaLevel& L, const Vec3& center, int grid_n = 600);

}  // namespace newtframe
