#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "newtframe/common.hpp"

namespace newtframe {

// N(k, d): dimension of the space of degree-k spherical harmonics.
long long dim_harmonics(int k, int d);

// Gegenbauer C_k^mu (d > 2, mu = (d-2)/2) or Chebyshev T_k (d = 2) values
// for k = 0..max_degree at a fixed u, by the three-term recurrence.
std::vector<double> gegenbauer_all(int d, int max_degree, double u);

// Z_k(u): kernel of the orthogonal projector onto H_k.
double zk_eval(int d, int k, double u);
double zk_one(int d, int k);  // Z_k(1)

// Zonal kernel u -> sum_k lambda_k Z_k(u), coefficients against Z_k.
class ZonalKernel {
 public:
  int d = 3;
  std::vector<double> coeffs;  // lambda_0..lambda_L

  ZonalKernel() = default;
  ZonalKernel(int dim, std::vector<double> lam) : d(dim), coeffs(std::move(lam)) {}

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
  double eval(double u) const;         // Clenshaw
  double eval_direct(double u) const;  // forward recurrence + summation

  // Zonal convolution H(x.z) = int F(x.y) G(y.z) dsigma(y): coefficientwise.
  friend ZonalKernel zonal_convolve(const ZonalKernel& f, const ZonalKernel& g);

  // Delta_0^{K/2} acting along either argument: multiply lambda_k by
  // (-k(k+d-2))^{K/2}. K must be even.
  ZonalKernel laplace_beltrami_power(int K) const;
};

// lambda_k = <F, Z_k> / Z_k(1) by quadrature in the polar angle; `scale`
// is the angular width of the kernel's peak (panels refine near theta=0).
ZonalKernel project_zonal(int d, const std::function<double(double)>& F, int max_degree,
                          double peak_scale = 1.0);

// Real orthonormal spherical harmonic basis.
//   d = 2: nu=1 is cos(k phi)/sqrt(pi), nu=2 is sin(k phi)/sqrt(pi), Y_00 = 1/sqrt(2 pi)
//   d = 3: nu = 1..2k+1 maps to m = nu-k-1 with the usual real basis
double sh_eval(int d, int k, int nu, const Vec3& x);

// All basis values for k <= max_degree at x, laid out per SHExpansion offsets.
void sh_row(int d, int max_degree, const Vec3& x, std::vector<double>& out);

// Coefficient vector b_{k nu} of a function on S^{d-1} (equivalently of the
// harmonic extension sum b r^k Y); all frame computation is coefficient-side.
class SHExpansion {
 public:
  int d = 3;
  int max_degree = 0;
  std::vector<double> coeffs;  // offset(k) + (nu - 1)

  SHExpansion() = default;
  SHExpansion(int dim, int deg);

  static std::size_t offset(int d, int k);
  static std::size_t size(int d, int deg);
  double& at(int k, int nu);
  double at(int k, int nu) const;

  double eval(const Vec3& x) const;
  double eval_interior(const Vec3& x) const;  // sum b |x|^k Y_k(x/|x|), |x| < 1
  double norm_l2() const;                     // Parseval
  double inner(const SHExpansion& other) const;
  double component_norm(int k) const;         // l2 mass of degree k

  SHExpansion laplace_beltrami_power(int K) const;
  SHExpansion truncated(int new_degree) const;

  SHExpansion& axpy(double a, const SHExpansion& other);  // this += a * other

  // this += scale * sum_k lambda_k Z_k(center . x) expanded in the basis,
  // using Z_k(c.x) = sum_nu Y_{k nu}(c) Y_{k nu}(x).
  void add_zonal(const ZonalKernel& kernel, const Vec3& center, double scale);

  std::string to_json() const;
  static SHExpansion from_json(const std::string& text);
};

// <F(c1 .), G(c2 .)> for zonal kernels: sum_k lambda_k mu_k Z_k(c1 . c2).
double zonal_translate_inner(const ZonalKernel& f, const ZonalKernel& g, double u);

// Expansion of the restricted monomial y^beta (beta = exponents per
// coordinate, |beta| = degree); exact via product quadrature. Used for
// moment integrals int y^beta f = <f, monomial>.
SHExpansion sphere_monomial_expansion(int d, const std::vector<int>& beta);

// Poisson kernel P(y, x) for |x| < 1, y on the sphere; closed form.
double poisson_eval(const Vec3& y, const Vec3& x, int d);
// Truncated series sum_{k<=terms} |x|^k Z_k(xhat . y).
double poisson_series(const Vec3& y, const Vec3& x, int d, int terms);

}  // namespace newtframe
