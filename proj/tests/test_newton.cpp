#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "newtframe/newton.hpp"

using namespace newtframe;

namespace {

Vec3 random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), d == 2 ? 0.0 : g(rng));
  while (v.norm() < 1e-8) v = Vec3(g(rng), g(rng), d == 2 ? 0.0 : g(rng));
  return v.normalized();
}

double quad_integral_sphere(int d, const std::function<double(double)>& F, double peak) {
  std::vector<double> edges{0.0};
  for (double e = peak / 8.0; e < kPi; e *= 1.7) edges.push_back(std::min(e, kPi));
  if (edges.back() < kPi) edges.push_back(kPi);
  const GaussRule gl = gauss_legendre(40);
  double s = 0.0;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double mid = 0.5 * (edges[p] + edges[p + 1]), half = 0.5 * (edges[p + 1] - edges[p]);
    double pan = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double th = mid + half * gl.nodes[i];
      pan += gl.weights[i] * F(std::cos(th)) * std::pow(std::sin(th), d - 2);
    }
    s += pan * half;
  }
  return s * sphere_area(d - 1);
}

}  // namespace

TEST_CASE("F_eps basics") {
  for (int d : {2, 3}) {
    for (double eps : {0.5, 0.25, 0.1}) {
      const double M = 2.0 + d;  // K = 2 default
      LocalizedKernel F = build_localized_kernel(d, eps, M, 0);
      // value at u = 1: kappa eps^{1-d}
      CHECK(F.eval(1.0) ==
            doctest::Approx(F.kappa * std::pow(eps, 1 - d)).epsilon(1e-12));
      // unit integral, independent quadrature oracle
      CHECK(quad_integral_sphere(d, [&](double u) { return F.eval(u); }, eps) ==
            doctest::Approx(1.0).epsilon(1e-9));
      // positivity
      for (int i = 0; i <= 500; ++i) CHECK(F.eval(-1.0 + 2.0 * i / 500) > 0.0);
      CHECK(F.fit_residual <= 1e-8);
    }
  }
}

TEST_CASE("Newtonian shift expansions") {
  // d=3, a=2, u=1: closed form 1 = sum 2^{-1-k}
  ZonalKernel sh = newton_shift_expansion(3, 2.0, shift_tail_degree(2.0, 1e-14));
  CHECK(sh.eval(1.0) == doctest::Approx(1.0).epsilon(1e-13));
  // d=3, a=1.1, u=-1: 1/2.1
  sh = newton_shift_expansion(3, 1.1, shift_tail_degree(1.1, 1e-14));
  CHECK(sh.eval(-1.0) == doctest::Approx(1.0 / 2.1).epsilon(1e-10));
  // pointwise agreement with the closed form
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int d : {2, 3}) {
    const double a = 1.37;
    ZonalKernel k = newton_shift_expansion(d, a, shift_tail_degree(a, 1e-14));
    for (int t = 0; t < 40; ++t) {
      const double u = unif(rng);
      const double r = std::sqrt(a * a + 1.0 - 2.0 * a * u);
      const double closed = d == 2 ? std::log(1.0 / r) : std::pow(r, 2.0 - d);
      CHECK(k.eval(u) == doctest::Approx(closed).epsilon(1e-10));
    }
  }
  // d=2, a=e: constant term (against T_0) is -1
  ZonalKernel k2 = newton_shift_expansion(2, std::exp(1.0), 32);
  CHECK(k2.coeffs[0] / (2.0 * kPi) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_THROWS_AS(newton_shift_expansion(3, 0.9, 10), ValidationError);
}

TEST_CASE("analytic pole-radius derivatives of shift coefficients") {
  for (int d : {2, 3}) {
    for (int k : {0, 1, 4, 9}) {
      for (int order : {1, 2, 3}) {
        const double a = 1.4;
        const double h = order <= 2 ? 1e-4 : 5e-3;  // keep the FD oracle above noise
        double fd = 0.0;
        for (int i = 0; i <= order; ++i) {
          const double sgn = ((order - i) % 2 == 0) ? 1.0 : -1.0;
          double binom = 1.0;
          for (int q = 1; q <= i; ++q) binom = binom * (order - i + q) / q;
          const double av = a + (i - order / 2.0) * h;
          const double lam = newton_shift_expansion(d, av, k).coeffs[k];
          fd += sgn * binom * lam;
        }
        fd /= std::pow(h, order);
        const double an = shift_coeff_derivative(d, a, k, order);
        CHECK(an == doctest::Approx(fd).epsilon(1e-3));
      }
    }
  }
}

TEST_CASE("b-coefficient fit") {
  // m = 0 reduces to a pure rescaling: b_0 = eps^{-1}
  BFitReport r0 = solve_b_coefficients(3, 0.3, 0);
  CHECK(r0.b[0] == doctest::Approx(1.0 / 0.3).epsilon(1e-12));
  CHECK(r0.rel_residual <= 1e-12);

  // d=3, M=4 => m=2, residual certified
  BFitReport r2 = solve_b_coefficients(3, 0.25, 2);
  CHECK(r2.rel_residual <= 1e-8);

  // reconstructed cF on 200 points (criterion-4 shape), both dimensions
  for (int d : {2, 3}) {
    for (double eps : {0.5, 0.25, 0.1}) {
      const double M = 2.0 + d;
      LocalizedKernel F = build_localized_kernel(d, eps, M, 0);
      const int m = F.m;
      double worst = 0.0;
      for (int i = 0; i < 200; ++i) {
        const double theta = kPi * (i + 0.5) / 200;
        const double u = std::cos(theta);
        // sum_l b_l (d/da)^l shift evaluated via the zonal coefficient route
        const int L = shift_tail_degree(F.a, 1e-14);
        long double rec = 0.0L;
        const auto geg = gegenbauer_all(d, L, u);
        const double mu = 0.5 * (d - 2);
        for (int k = 0; k <= L; ++k) {
          double radial = 0.0;
          for (int l = (d == 2 ? 1 : 0); l <= m; ++l)
            radial += F.b[l] * shift_coeff_derivative(d, F.a, k, l);
          const double scale =
              d == 2 ? (k == 0 ? 1.0 / (2.0 * kPi) : 1.0 / kPi) : (k + mu) / (mu * sphere_area(d));
          rec += static_cast<long double>(radial * scale * geg[k]);
        }
        if (d == 2) rec += F.b[0];
        const double target = F.raw(u);
        worst = std::max(worst, std::abs(static_cast<double>(rec) - target) /
                                    std::max(std::abs(target), 1e-300));
      }
      MESSAGE("d=", d, " eps=", eps, " reconstruction rel err ", worst);
      CHECK(worst <= 1e-7);
    }
  }
}

TEST_CASE("fitted b reproduce the zonal projection of F") {
  LocalizedKernel F = build_localized_kernel(3, 0.25, 5.0, 24);
  for (int k = 0; k <= 24; ++k) {
    double radial = 0.0;
    for (int l = 0; l <= F.m; ++l) radial += F.b[l] * shift_coeff_derivative(3, F.a, k, l);
    CHECK(F.kappa * radial == doctest::Approx(F.zonal.coeffs[k]).epsilon(1e-7));
  }
}

TEST_CASE("laplacian words") {
  for (int d : {2, 3}) {
    for (int K : {2, 4}) {
      const auto words = laplacian_words(d, K, 1e-3);
      double total = 0.0;
      for (const auto& w : words) total += w.coef;
      CHECK(std::abs(total) < 1e-9);
      if (K == 2) CHECK(static_cast<int>(words.size()) == (d == 2 ? 3 : 7));
    }
  }
  // action on coordinate functions: fL_t x_i = -(d-1) (2(1-cos t)/t^2) x_i
  const double t = 1e-3;
  const auto words = laplacian_words(3, 2, t);
  std::mt19937_64 rng(5);
  const Vec3 z = random_unit(rng, 3);
  for (int axis = 0; axis < 3; ++axis) {
    long double s = 0.0L;
    for (const auto& w : words) s += static_cast<long double>(w.coef) * (w.rot * z)(axis);
    const double lhs = static_cast<double>(s) / (t * t);
    const double rhs = -2.0 * (2.0 * (1.0 - std::cos(t)) / (t * t)) * z(axis);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
  }
}

TEST_CASE("time step selection") {
  // exact operator annihilates constants for K >= 2: word coefficients sum to 0
  // (checked above); the spec example: K=2, m=1 (M=3), coarse gamma4=0.1, d=3, j=2
  ThetaParams p;
  p.K = 2;
  p.M_override = 3.0;
  p.gamma4 = 0.1;
  p.gamma1 = 0.5;
  const double eps = p.gamma1 / dilation_of_level(2);
  LocalizedKernel F = build_localized_kernel(3, eps, p.decay_M(3), 0);
  CHECK(F.m == 1);
  TimeStepReport rep = choose_time_step(3, 2, p, F);
  MESSAGE("j=2 t=", rep.t, " achieved=", rep.achieved, " target=", rep.target,
          " halvings=", rep.halvings, " met=", rep.met);
  CHECK(rep.t < 1e-2);
  CHECK(rep.t >= 1e-8);
  CHECK(std::isfinite(rep.achieved));
  // halving improves the discrepancy roughly first-order before the floor
  CHECK(rep.halvings >= 2);
}

TEST_CASE("theta level and atom compilation (d=3, coarse)") {
  ThetaParams p;
  p.K = 2;
  p.M_override = 3.0;  // m = 1: the 14-pole counting example
  const CutoffPair cutoff;
  ThetaLevel L = build_theta_level(3, 2, p, cutoff, 16);
  CHECK(L.F.m == 1);

  const Vec3 xi = Vec3(0.2, -0.4, 0.89).normalized();
  NewtonianAtom atom = compile_theta_atom(L, NodeIndex{2, 0}, xi, 0.5);

  const std::size_t n_support = L.support(xi).size();
  CHECK(n_support > 0);
  // per-zeta pole count <= (2*3+1) * 2 = 14 before dedup
  CHECK(atom.poles.size() <= 14 * n_support);

  // all radii in {a, a+t}; directions within the cap r_xi + t K/2
  for (const auto& [y, c] : atom.poles) {
    const double r = y.norm();
    const bool near_a = std::abs(r - L.F.a) < 1e-12;
    const bool near_at = std::abs(r - (L.F.a + L.t)) < 1e-12;
    CHECK((near_a || near_at));
    CHECK(r >= 1.0 + L.params.gamma1 / L.N - 1e-12);
    CHECK(geodesic_distance(y / r, xi) <= L.r_xi + L.t * L.params.K / 2.0 + 1e-9);
  }

  // stable evaluator agrees with the flat pole sum up to the pole-list
  // conditioning (coefficients ~ t^{-K-m} with cancellation)
  std::mt19937_64 rng(11);
  double cond = 0.0;
  for (const auto& [y, c] : atom.poles) cond += std::abs(c);
  const double tol = std::max(1e-10, 1e-17 * cond);
  for (int t = 0; t < 15; ++t) {
    const Vec3 x = random_unit(rng, 3);
    const double via_poles = atom_eval_direct(atom, x) / atom.c_diamond;
    const double stable = L.theta_diamond_eval(xi, x);
    CHECK(std::abs(via_poles - stable) <= tol + 1e-6 * std::abs(stable));
  }
}

TEST_CASE("stable band expansion matches the pole-sum expansion") {
  ThetaParams p;  // defaults: K=2, M=K+d
  const CutoffPair cutoff;
  for (int d : {2, 3}) {
    ThetaLevel L = build_theta_level(d, 2, p, cutoff, 8);
    const Vec3 xi = d == 2 ? circle_point(0.4) : Vec3(0.1, 0.7, 0.7).normalized();
    SHExpansion stable(d, 8);
    L.add_theta_expansion(stable, xi, 1.0);

    NewtonianAtom atom = compile_theta_atom(L, NodeIndex{2, 0}, xi, 1.0);
    SHExpansion from_poles(d, 8);
    double cond = 0.0;
    for (const auto& [y, c] : atom.poles) {
      const double r = y.norm();
      ZonalKernel sh = newton_shift_expansion(d, r, 8);
      from_poles.add_zonal(sh, y / r, c);
      cond += std::abs(c) * std::abs(sh.coeffs[0]);
    }
    SHExpansion diff = stable;
    diff.axpy(-1.0, from_poles);
    // the pole route loses digits to cancellation: tolerance scales with sum |c_i|
    MESSAGE("d=", d, " pole-route gap ", diff.norm_l2(), " conditioning ", cond);
    CHECK(diff.norm_l2() <= 1e-15 * cond + 1e-9);
  }
}

TEST_CASE("theta_eval: hand atoms, direct vs series") {
  // single pole at 2 e3, coefficient 1, evaluated at e3: 1/|e3 - 2 e3| = 1
  NewtonianAtom a3;
  a3.d = 3;
  a3.poles = {{Vec3(0, 0, 2), 1.0}};
  CHECK(atom_eval_direct(a3, Vec3(0, 0, 1)) == doctest::Approx(1.0));

  // d=2 single pole at radius e in direction of x: ln(1/(e-1))
  NewtonianAtom a2;
  a2.d = 2;
  a2.poles = {{Vec3(std::exp(1.0), 0, 0), 1.0}};
  CHECK(atom_eval_direct(a2, Vec3(1, 0, 0)) ==
        doctest::Approx(std::log(1.0 / (std::exp(1.0) - 1.0))));

  // random small atom: direct vs Gegenbauer series on sphere points
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  for (int d : {2, 3}) {
    NewtonianAtom atom;
    atom.d = d;
    atom.a0 = 0.3;
    for (int i = 0; i < 6; ++i) {
      const Vec3 dir = random_unit(rng, d);
      atom.poles.emplace_back((1.3 + 0.2 * i) * dir, g(rng));
    }
    for (int t = 0; t < 50; ++t) {
      const Vec3 x = random_unit(rng, d);
      CHECK(atom_eval_direct(atom, x) ==
            doctest::Approx(atom_eval_series(atom, x)).epsilon(1e-8));
    }
  }
  CHECK_THROWS_AS(atom_eval_direct(a3, Vec3(0, 0, 2)), ValidationError);
}

TEST_CASE("atom JSON round trip") {
  NewtonianAtom atom;
  atom.d = 3;
  atom.idx = {2, 7};
  atom.a0 = 0.0;
  atom.center = Vec3(0, 0, 1);
  atom.poles = {{Vec3(0, 0, 1.5), 2.0}, {Vec3(0.1, 0, 1.4), -1.0}};
  NewtonianAtom back = NewtonianAtom::from_json(atom.to_json());
  CHECK(back.idx == atom.idx);
  REQUIRE(back.poles.size() == 2);
  CHECK(back.poles[1].second == doctest::Approx(-1.0));
  CHECK(back.to_json() == atom.to_json());
}

TEST_CASE("diamond pipeline stages") {
  ThetaParams p;
  const CutoffPair cutoff;
  for (int d : {2, 3}) {
    ThetaLevel L = build_theta_level(d, 2, p, cutoff, 16);
    const Vec3 xi = d == 2 ? circle_point(1.2) : Vec3(0.5, 0.5, 0.7).normalized();
    DiamondReport rep = diamond_pipeline(L, xi, d == 2 ? 400 : 300);
    MESSAGE("d=", d, " psi-h1=", rep.psi_h1, " h1-h2=", rep.h1_h2, " h2-h3=", rep.h2_h3,
            " h3-theta=", rep.h3_theta, " envelope=", rep.envelope_ratio);
    CHECK(std::isfinite(rep.envelope_ratio));
    // h3 -> theta is the discrete-operator error: far below the other stages
    CHECK(rep.h3_theta <= 10.0 * std::max({rep.psi_h1, rep.h1_h2, rep.h2_h3}));

    // truncation monotonicity: shrinking gamma3 (larger caps) shrinks h2 - h3
    ThetaParams tighter = p;
    tighter.gamma3 = p.gamma3 / 2.0;
    ThetaLevel L2 = build_theta_level(d, 2, tighter, cutoff, 16);
    DiamondReport rep2 = diamond_pipeline(L2, xi, d == 2 ? 400 : 300);
    CHECK(rep2.h2_h3 <= rep.h2_h3 * 1.05 + 1e-12);
  }
}

TEST_CASE("h1 two ways: convolve-then-Delta vs Delta-then-convolve") {
  const CutoffPair cutoff;
  ThetaParams p;
  ThetaLevel L = build_theta_level(3, 3, p, cutoff, 16);
  // Psi_N * F via coefficients, then Delta^{K/2} applied to Phi_N * F
  const int deg = L.psi_kernel.degree();
  ZonalKernel phiF = zonal_convolve(L.phi_kernel, ZonalKernel(3, std::vector<double>(
                                                        L.F.zonal.coeffs.begin(),
                                                        L.F.zonal.coeffs.begin() + deg + 1)));
  ZonalKernel route1 = phiF.laplace_beltrami_power(L.params.K);
  ZonalKernel route2 = zonal_convolve(L.psi_kernel, ZonalKernel(3, std::vector<double>(
                                                        L.F.zonal.coeffs.begin(),
                                                        L.F.zonal.coeffs.begin() + deg + 1)));
  for (double u : {-0.9, -0.3, 0.2, 0.8, 1.0})
    CHECK(route1.eval(u) == doctest::Approx(route2.eval(u)).epsilon(1e-10));
}

TEST_CASE("moment gaps of the construction at a coarse level") {
  const CutoffPair cutoff;
  ThetaParams p;
  for (int d : {2, 3}) {
    ThetaLevel L = build_theta_level(d, 2, p, cutoff, 8);
    const Vec3 xi = d == 2 ? circle_point(0.3) : Vec3(0.3, -0.2, 0.93).normalized();
    SHExpansion theta(d, 8);
    L.add_theta_expansion(theta, xi, 1.0);
    SHExpansion psi(d, 8);
    psi.add_zonal(L.psi_kernel, xi, 1.0);
    SHExpansion diff = psi;
    diff.axpy(-1.0, theta);

    const double NK = std::pow(L.N, -L.params.K);
    // |beta| = 0: rotation-invariance makes the gap vanish to roundoff
    const double gap0 = std::abs(std::sqrt(sphere_area(d)) * diff.at(0, 1));
    CHECK(gap0 <= 1e-10);
    // |beta| = 1
    double gap1 = 0.0;
    for (int axis = 0; axis < d; ++axis) {
      std::vector<int> beta(axis + 1, 0);
      beta[axis] = 1;
      const SHExpansion mono = sphere_monomial_expansion(d, beta);
      gap1 = std::max(gap1, std::abs(mono.inner(diff)));
    }
    MESSAGE("d=", d, " moment gaps: |b|=0 ", gap0, ", |b|=1 ", gap1, " vs gamma0 N^-K ",
            p.gamma0 * NK);
    CHECK(gap1 <= p.gamma0 * NK);  // shipped defaults calibrated to hold here
  }
}
