#include "newtframe/zonal.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace newtframe {

using json = nlohmann::json;

long long dim_harmonics(int k, int d) {
  if (k < 0 || d < 2) throw ValidationError("dim_harmonics: k >= 0, d >= 2 required");
  if (k == 0) return 1;
  // (2k+d-2)/k * binom(k+d-3, d-2), the binomial evaluated as a (d-2)-term product
  long double binom = 1.0L;
  for (int i = 1; i <= d - 2; ++i) binom = binom * (k - 1 + i) / i;
  long double value = binom * (2.0L * k + d - 2) / k;
  return static_cast<long long>(value + 0.5L);
}

std::vector<double> gegenbauer_all(int d, int max_degree, double u) {
  std::vector<double> c(static_cast<std::size_t>(max_degree) + 1);
  if (d == 2) {
    c[0] = 1.0;
    if (max_degree >= 1) c[1] = u;
    for (int k = 2; k <= max_degree; ++k) c[k] = 2.0 * u * c[k - 1] - c[k - 2];
  } else {
    const double mu = 0.5 * (d - 2);
    c[0] = 1.0;
    if (max_degree >= 1) c[1] = 2.0 * mu * u;
    for (int k = 2; k <= max_degree; ++k)
      c[k] = (2.0 * u * (k - 1 + mu) * c[k - 1] - (k + 2.0 * mu - 2.0) * c[k - 2]) / k;
  }
  return c;
}

// scale(k) with Z_k = scale(k) * C_k (or T_k when d = 2)
static double zk_scale(int d, int k) {
  if (d == 2) return k == 0 ? 1.0 / (2.0 * kPi) : 1.0 / kPi;
  const double mu = 0.5 * (d - 2);
  return (k + mu) / (mu * sphere_area(d));
}

double zk_eval(int d, int k, double u) {
  const auto c = gegenbauer_all(d, k, u);
  return zk_scale(d, k) * c[k];
}

double zk_one(int d, int k) {
  if (d == 2) return k == 0 ? 1.0 / (2.0 * kPi) : 1.0 / kPi;
  // C_k^mu(1) = binom(k + 2mu - 1, k) = binom(k+d-3, d-3), 2mu = d-2
  long double c1 = 1.0L;
  for (int i = 1; i <= d - 3; ++i) c1 = c1 * (k + i) / i;
  return zk_scale(d, k) * static_cast<double>(c1);
}

double ZonalKernel::eval(double u) const {
  const int n = degree();
  if (n < 0) return 0.0;
  const double mu = 0.5 * (d - 2);
  auto alpha = [&](int k) {
    if (d == 2) return k == 0 ? u : 2.0 * u;
    return 2.0 * u * (k + mu) / (k + 1);
  };
  auto beta = [&](int k) {
    if (d == 2) return -1.0;
    return -(k + 2.0 * mu - 1.0) / (k + 1);
  };
  double b1 = 0.0, b2 = 0.0;
  for (int k = n; k >= 0; --k) {
    const double a_k = coeffs[k] * zk_scale(d, k);
    const double b0 = a_k + alpha(k) * b1 + beta(k + 1) * b2;
    b2 = b1;
    b1 = b0;
  }
  return b1;  // phi_0 = 1 and phi_1 = alpha_0 phi_0 for all families used here
}

double ZonalKernel::eval_direct(double u) const {
  const int n = degree();
  if (n < 0) return 0.0;
  const auto c = gegenbauer_all(d, n, u);
  double s = 0.0;
  for (int k = 0; k <= n; ++k) s += coeffs[k] * zk_scale(d, k) * c[k];
  return s;
}

ZonalKernel zonal_convolve(const ZonalKernel& f, const ZonalKernel& g) {
  if (f.d != g.d) throw ValidationError("zonal_convolve: dimension mismatch");
  const int n = std::min(f.degree(), g.degree());
  std::vector<double> lam(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) lam[k] = f.coeffs[k] * g.coeffs[k];
  return ZonalKernel(f.d, std::move(lam));
}

ZonalKernel ZonalKernel::laplace_beltrami_power(int K) const {
  if (K % 2 != 0) throw ValidationError("laplace_beltrami_power: K must be even");
  ZonalKernel out(*this);
  for (int k = 0; k <= degree(); ++k) {
    const double ev = -static_cast<double>(k) * (k + d - 2);
    out.coeffs[k] *= std::pow(ev, K / 2);
  }
  if (K > 0 && !out.coeffs.empty()) out.coeffs[0] = 0.0;
  return out;
}

ZonalKernel project_zonal(int d, const std::function<double(double)>& F, int max_degree,
                          double peak_scale) {
  // theta-panels refined geometrically near 0 when the kernel is peaked
  std::vector<double> edges{0.0};
  double s = std::min(std::max(peak_scale, 1e-4), kPi / 4.0);
  for (double e = s; e < kPi; e *= 2.0) edges.push_back(std::min(e, kPi));
  if (edges.back() < kPi) edges.push_back(kPi);

  const GaussRule rule = gauss_legendre(48);
  std::vector<double> acc(static_cast<std::size_t>(max_degree) + 1, 0.0);
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double mid = 0.5 * (edges[p] + edges[p + 1]);
    const double half = 0.5 * (edges[p + 1] - edges[p]);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double theta = mid + half * rule.nodes[i];
      const double w = rule.weights[i] * half * std::pow(std::sin(theta), d - 2);
      const double fv = F(std::cos(theta));
      const auto c = gegenbauer_all(d, max_degree, std::cos(theta));
      for (int k = 0; k <= max_degree; ++k) acc[k] += w * fv * zk_scale(d, k) * c[k];
    }
  }
  const double wd1 = sphere_area(d - 1);
  std::vector<double> lam(static_cast<std::size_t>(max_degree) + 1);
  for (int k = 0; k <= max_degree; ++k) lam[k] = wd1 * acc[k] / zk_one(d, k);
  return ZonalKernel(d, std::move(lam));
}

// ---------------------------------------------------------------------------
// real spherical harmonics

void sh_row(int d, int max_degree, const Vec3& x, std::vector<double>& out) {
  out.assign(SHExpansion::size(d, max_degree), 0.0);
  if (d == 2) {
    const double phi = std::atan2(x.y(), x.x());
    out[0] = 1.0 / std::sqrt(2.0 * kPi);
    const double is = 1.0 / std::sqrt(kPi);
    for (int k = 1; k <= max_degree; ++k) {
      out[SHExpansion::offset(2, k)] = std::cos(k * phi) * is;
      out[SHExpansion::offset(2, k) + 1] = std::sin(k * phi) * is;
    }
    return;
  }
  if (d != 3) throw ValidationError("sh_row: d in {2, 3}");
  const double ct = clamp_to_unit(x.z());
  const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
  const double phi = std::atan2(x.y(), x.x());
  const int L = max_degree;

  // normalized associated Legendre values, column by column in m
  std::vector<double> pmm(L + 1), pm1(L + 1), pm2(L + 1);
  std::vector<double> cmphi(L + 1), smphi(L + 1);
  for (int m = 0; m <= L; ++m) {
    cmphi[m] = std::cos(m * phi);
    smphi[m] = std::sin(m * phi);
  }
  auto put = [&](int k, int m, double pbar) {
    const std::size_t off = SHExpansion::offset(3, k);
    const int center = k;  // nu - 1 = center + m
    if (m == 0) {
      out[off + center] = pbar;
    } else {
      const double f = std::sqrt(2.0) * pbar;
      out[off + center + m] = f * cmphi[m];
      out[off + center - m] = f * smphi[m];
    }
  };
  double p_mm = std::sqrt(1.0 / (4.0 * kPi));
  for (int m = 0; m <= L; ++m) {
    if (m > 0) p_mm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * st;
    double p_km2 = 0.0;
    double p_km1 = p_mm;
    put(m, m, p_mm);
    for (int k = m + 1; k <= L; ++k) {
      const double a = std::sqrt((4.0 * k * k - 1.0) / (static_cast<double>(k) * k - m * m));
      const double b =
          std::sqrt(((static_cast<double>(k - 1) * (k - 1)) - m * m) /
                    (4.0 * static_cast<double>(k - 1) * (k - 1) - 1.0));
      const double p_k = a * (ct * p_km1 - b * p_km2);
      put(k, m, p_k);
      p_km2 = p_km1;
      p_km1 = p_k;
    }
  }
}

double sh_eval(int d, int k, int nu, const Vec3& x) {
  if (nu < 1 || nu > dim_harmonics(k, d)) throw ValidationError("sh_eval: nu out of range");
  std::vector<double> row;
  sh_row(d, k, x, row);
  return row[SHExpansion::offset(d, k) + (nu - 1)];
}

// ---------------------------------------------------------------------------
// SHExpansion

SHExpansion::SHExpansion(int dim, int deg) : d(dim), max_degree(deg) {
  coeffs.assign(size(dim, deg), 0.0);
}

std::size_t SHExpansion::offset(int d, int k) {
  if (d == 2) return k == 0 ? 0 : static_cast<std::size_t>(2 * k - 1);
  return static_cast<std::size_t>(k) * k;
}

std::size_t SHExpansion::size(int d, int deg) {
  if (d == 2) return static_cast<std::size_t>(2 * deg + 1);
  return static_cast<std::size_t>(deg + 1) * (deg + 1);
}

double& SHExpansion::at(int k, int nu) { return coeffs[offset(d, k) + (nu - 1)]; }
double SHExpansion::at(int k, int nu) const { return coeffs[offset(d, k) + (nu - 1)]; }

double SHExpansion::eval(const Vec3& x) const {
  std::vector<double> row;
  sh_row(d, max_degree, x, row);
  double s = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * row[i];
  return s;
}

double SHExpansion::eval_interior(const Vec3& x) const {
  const double r = x.norm();
  if (r >= 1.0) throw ValidationError("eval_interior: |x| < 1 required");
  const Vec3 xhat = r > 0 ? Vec3(x / r) : Vec3(1, 0, 0);
  std::vector<double> row;
  sh_row(d, max_degree, xhat, row);
  double s = 0.0, rk = 1.0;
  for (int k = 0; k <= max_degree; ++k) {
    const std::size_t off = offset(d, k);
    const std::size_t n = dim_harmonics(k, d);
    double block = 0.0;
    for (std::size_t nu = 0; nu < n; ++nu) block += coeffs[off + nu] * row[off + nu];
    s += rk * block;
    rk *= r;
  }
  return s;
}

double SHExpansion::norm_l2() const {
  double s = 0.0;
  for (double c : coeffs) s += c * c;
  return std::sqrt(s);
}

double SHExpansion::inner(const SHExpansion& other) const {
  const std::size_t n = std::min(coeffs.size(), other.coeffs.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += coeffs[i] * other.coeffs[i];
  return s;
}

double SHExpansion::component_norm(int k) const {
  const std::size_t off = offset(d, k);
  const std::size_t n = dim_harmonics(k, d);
  double s = 0.0;
  for (std::size_t nu = 0; nu < n; ++nu) s += coeffs[off + nu] * coeffs[off + nu];
  return std::sqrt(s);
}

SHExpansion SHExpansion::laplace_beltrami_power(int K) const {
  if (K % 2 != 0) throw ValidationError("laplace_beltrami_power: K must be even");
  SHExpansion out(*this);
  for (int k = 0; k <= max_degree; ++k) {
    const double f = std::pow(-static_cast<double>(k) * (k + d - 2), K / 2);
    const std::size_t off = offset(d, k);
    const std::size_t n = dim_harmonics(k, d);
    for (std::size_t nu = 0; nu < n; ++nu) out.coeffs[off + nu] *= (k == 0 && K > 0) ? 0.0 : f;
  }
  return out;
}

SHExpansion SHExpansion::truncated(int new_degree) const {
  SHExpansion out(d, new_degree);
  const std::size_t n = std::min(out.coeffs.size(), coeffs.size());
  std::copy(coeffs.begin(), coeffs.begin() + n, out.coeffs.begin());
  return out;
}

SHExpansion& SHExpansion::axpy(double a, const SHExpansion& other) {
  if (other.d != d) throw ValidationError("axpy: dimension mismatch");
  if (other.max_degree > max_degree) {
    max_degree = other.max_degree;
    coeffs.resize(size(d, max_degree), 0.0);
  }
  for (std::size_t i = 0; i < other.coeffs.size(); ++i) coeffs[i] += a * other.coeffs[i];
  return *this;
}

void SHExpansion::add_zonal(const ZonalKernel& kernel, const Vec3& center, double scale) {
  if (kernel.d != d) throw ValidationError("add_zonal: dimension mismatch");
  const int L = std::min(kernel.degree(), max_degree);
  std::vector<double> row;
  sh_row(d, L, center, row);
  for (int k = 0; k <= L; ++k) {
    const double f = scale * kernel.coeffs[k];
    if (f == 0.0) continue;
    const std::size_t off = offset(d, k);
    const std::size_t n = dim_harmonics(k, d);
    for (std::size_t nu = 0; nu < n; ++nu) coeffs[off + nu] += f * row[off + nu];
  }
}

std::string SHExpansion::to_json() const {
  json j;
  j["d"] = d;
  j["deg"] = max_degree;
  json rows = json::array();
  for (int k = 0; k <= max_degree; ++k) {
    const std::size_t off = offset(d, k);
    const long long n = dim_harmonics(k, d);
    for (long long nu = 1; nu <= n; ++nu) {
      const double v = coeffs[off + nu - 1];
      if (v != 0.0) rows.push_back({k, nu, v, 0.0});
    }
  }
  j["coeffs"] = std::move(rows);
  return j.dump(2);
}

SHExpansion SHExpansion::from_json(const std::string& text) {
  const json j = json::parse(text);
  SHExpansion f(j.at("d").get<int>(), j.at("deg").get<int>());
  for (const auto& row : j.at("coeffs")) {
    const int k = row[0].get<int>();
    const int nu = row[1].get<int>();
    f.at(k, nu) = row[2].get<double>();
  }
  return f;
}

double zonal_translate_inner(const ZonalKernel& f, const ZonalKernel& g, double u) {
  if (f.d != g.d) throw ValidationError("zonal_translate_inner: dimension mismatch");
  const int n = std::min(f.degree(), g.degree());
  ZonalKernel prod(f.d, std::vector<double>(static_cast<std::size_t>(n) + 1));
  for (int k = 0; k <= n; ++k) prod.coeffs[k] = f.coeffs[k] * g.coeffs[k];
  return prod.eval(u);
}

SHExpansion sphere_monomial_expansion(int d, const std::vector<int>& beta) {
  int degree = 0;
  for (int b : beta) degree += b;
  if (static_cast<int>(beta.size()) > d) throw ValidationError("monomial: too many exponents");
  SHExpansion out(d, degree);
  auto mono = [&](const Vec3& x) {
    double v = 1.0;
    const double c[3] = {x.x(), x.y(), x.z()};
    for (std::size_t i = 0; i < beta.size(); ++i) v *= std::pow(c[i], beta[i]);
    return v;
  };
  if (d == 2) {
    const int n = 8 * (degree + 2);
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * kPi * i / n;
      const Vec3 x(std::cos(phi), std::sin(phi), 0.0);
      std::vector<double> row;
      sh_row(2, degree, x, row);
      const double w = 2.0 * kPi / n * mono(x);
      for (std::size_t u = 0; u < out.coeffs.size(); ++u) out.coeffs[u] += w * row[u];
    }
    return out;
  }
  const GaussRule gl = gauss_legendre(2 * degree + 4);
  const int n_phi = 2 * degree + 5;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    const double z = gl.nodes[i];
    const double s = std::sqrt(1.0 - z * z);
    for (int k = 0; k < n_phi; ++k) {
      const double phi = 2.0 * kPi * k / n_phi;
      const Vec3 x(s * std::cos(phi), s * std::sin(phi), z);
      std::vector<double> row;
      sh_row(3, degree, x, row);
      const double w = gl.weights[i] * 2.0 * kPi / n_phi * mono(x);
      for (std::size_t u = 0; u < out.coeffs.size(); ++u) out.coeffs[u] += w * row[u];
    }
  }
  return out;
}

double poisson_eval(const Vec3& y, const Vec3& x, int d) {
  const double r = x.norm();
  if (r >= 1.0) throw ValidationError("poisson_eval: |x| < 1 required");
  const double dist = (x - y).norm();
  return (1.0 - r * r) / (sphere_area(d) * std::pow(dist, d));
}

double poisson_series(const Vec3& y, const Vec3& x, int d, int terms) {
  const double r = x.norm();
  const Vec3 xhat = r > 0 ? Vec3(x / r) : Vec3(1, 0, 0);
  const double u = clamp_to_unit(xhat.dot(y));
  const auto c = gegenbauer_all(d, terms, u);
  double s = 0.0, rk = 1.0;
  for (int k = 0; k <= terms; ++k) {
    s += rk * zk_scale(d, k) * c[k];
    rk *= r;
  }
  return s;
}

}  // namespace newtframe
