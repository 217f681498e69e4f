#include "newtframe/needlet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <nlohmann/json.hpp>

namespace newtframe {

using json = nlohmann::json;

namespace {
double bump(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return std::exp(-1.0 / (x * (1.0 - x)));
}
}  // namespace

CutoffPair::CutoffPair(int smoothness_order) : order_(smoothness_order) {
  if (order_ < 4) throw ValidationError("cutoff smoothness order must be >= 4");
  const GaussRule gl = gauss_legendre(16);
  cum_.assign(kPanels + 1, 0.0);
  const double h = 1.0 / kPanels;
  for (int p = 0; p < kPanels; ++p) {
    const double mid = (p + 0.5) * h, half = 0.5 * h;
    double s = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i)
      s += gl.weights[i] * bump(mid + half * gl.nodes[i]);
    cum_[p + 1] = cum_[p] + s * half;
  }
  total_ = cum_[kPanels];
}

double CutoffPair::smooth_step(double t) const {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double h = 1.0 / kPanels;
  const int p = std::min(kPanels - 1, static_cast<int>(t / h));
  const double lo = p * h;
  const GaussRule gl = gauss_legendre(16);
  const double mid = 0.5 * (lo + t), half = 0.5 * (t - lo);
  double s = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i)
    s += gl.weights[i] * bump(mid + half * gl.nodes[i]);
  return (cum_[p] + s * half) / total_;
}

double CutoffPair::a_hat_sq(double u) const {
  if (u <= 0.5 || u >= 2.0) return 0.0;
  if (u >= 1.0) return smooth_step(2.0 - u);
  return 1.0 - smooth_step(2.0 - 2.0 * u);
}

double CutoffPair::a_hat(double u) const { return std::sqrt(a_hat_sq(u)); }

// ---------------------------------------------------------------------------

int NeedletFrame::level_band_lo(int j) const {
  if (j == 0) return 0;
  return (j >= 2 ? (1 << (j - 2)) : 0) + 1;  // smallest k with k > 2^{j-2}
}

int NeedletFrame::level_band_hi(int j) const {
  if (j == 0) return 0;
  return (1 << j) - 1;  // largest k with k < 2^j
}

int NeedletFrame::level_of(std::size_t i) const {
  int j = 0;
  while (static_cast<std::size_t>(j + 1) < level_begin.size() && level_begin[j + 1] <= i) ++j;
  return j;
}

void NeedletFrame::build_caches() {
  band_rows_.assign(atoms.size(), {});
  kernel_sq_at_one_.assign(J + 1, 0.0);
  for (int j = 0; j <= J; ++j) {
    double s = 0.0;
    for (int k = 0; k <= kernels[j].degree(); ++k)
      s += kernels[j].coeffs[k] * kernels[j].coeffs[k] * zk_one(d, k);
    kernel_sq_at_one_[j] = s;
  }
  parallel_for(atoms.size(), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> row;
    for (std::size_t i = lo; i < hi; ++i) {
      const int j = level_of(i);
      const int klo = level_band_lo(j), khi = level_band_hi(j);
      sh_row(d, khi, atoms[i].center, row);
      const std::size_t from = SHExpansion::offset(d, klo);
      band_rows_[i].assign(row.begin() + from, row.end());
    }
  });
}

double NeedletFrame::psi_l2_norm(std::size_t i) const {
  const int j = level_of(i);
  return atoms[i].c_diamond * std::sqrt(kernel_sq_at_one_[j]);
}

double NeedletFrame::analyze_one(const SHExpansion& f, std::size_t i) const {
  const int j = level_of(i);
  const int klo = level_band_lo(j), khi = std::min(level_band_hi(j), f.max_degree);
  if (khi < klo) return 0.0;
  const auto& row = band_rows_[i];
  const std::size_t base = SHExpansion::offset(d, klo);
  double s = 0.0;
  for (int k = klo; k <= khi; ++k) {
    const double lam = kernels[j].coeffs[k];
    if (lam == 0.0) continue;
    const std::size_t off = SHExpansion::offset(d, k);
    const std::size_t n = dim_harmonics(k, d);
    double block = 0.0;
    for (std::size_t nu = 0; nu < n; ++nu)
      block += f.coeffs[off + nu] * row[off - base + nu];
    s += lam * block;
  }
  return atoms[i].c_diamond * s;
}

std::vector<double> NeedletFrame::analyze(const SHExpansion& f) const {
  std::vector<double> out(atoms.size(), 0.0);
  parallel_for(atoms.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = analyze_one(f, i);
  });
  return out;
}

void NeedletFrame::add_atom(SHExpansion& out, std::size_t i, double scale) const {
  const int j = level_of(i);
  const int klo = level_band_lo(j), khi = std::min(level_band_hi(j), out.max_degree);
  const auto& row = band_rows_[i];
  const std::size_t base = SHExpansion::offset(d, klo);
  const double c = scale * atoms[i].c_diamond;
  for (int k = klo; k <= khi; ++k) {
    const double lam = kernels[j].coeffs[k];
    if (lam == 0.0) continue;
    const std::size_t off = SHExpansion::offset(d, k);
    const std::size_t n = dim_harmonics(k, d);
    for (std::size_t nu = 0; nu < n; ++nu)
      out.coeffs[off + nu] += c * lam * row[off - base + nu];
  }
}

SHExpansion NeedletFrame::synthesize(const std::vector<double>& h) const {
  if (h.size() != atoms.size()) throw ValidationError("synthesize: coefficient count");
  const int workers = thread_count();
  std::vector<SHExpansion> partial(workers, SHExpansion(d, band_limit()));
  std::atomic<int> tid{0};
  parallel_for(atoms.size(), [&](std::size_t lo, std::size_t hi) {
    SHExpansion& acc = partial[tid.fetch_add(1)];
    for (std::size_t i = lo; i < hi; ++i)
      if (h[i] != 0.0) add_atom(acc, i, h[i]);
  });
  SHExpansion out(d, band_limit());
  for (const auto& acc : partial) out.axpy(1.0, acc);
  return out;
}

NeedletFrame build_needlet_frame(int d, int J, double gamma,
                                 std::shared_ptr<const CutoffPair> cutoff) {
  if (J < 1) throw ValidationError("build_needlet_frame: J >= 1");
  NeedletFrame fr;
  fr.d = d;
  fr.J = J;
  fr.gamma = gamma;
  fr.cutoff = cutoff ? std::move(cutoff) : std::make_shared<const CutoffPair>();

  fr.rules.resize(J + 1);
  fr.kernels.resize(J + 1);
  fr.kernels[0] = ZonalKernel(d, {1.0});  // L_0 = Z_0

  fr.level_begin.assign(J + 2, 0);
  fr.atoms.push_back({NodeIndex{0, 0}, Vec3(1, 0, 0), std::sqrt(sphere_area(d))});
  fr.level_begin[1] = 1;

  for (int j = 1; j <= J; ++j) {
    fr.rules[j] = exact_rule(d, j, gamma);
    const double n = std::ldexp(1.0, j - 1);
    std::vector<double> lam(static_cast<std::size_t>(fr.level_band_hi(j)) + 1, 0.0);
    for (int k = fr.level_band_lo(j); k <= fr.level_band_hi(j); ++k)
      lam[k] = fr.cutoff->a_hat(k / n);
    fr.kernels[j] = ZonalKernel(d, std::move(lam));
    for (std::size_t o = 0; o < fr.rules[j].nodes.size(); ++o)
      fr.atoms.push_back({NodeIndex{j, static_cast<int>(o)}, fr.rules[j].nodes[o],
                          std::sqrt(fr.rules[j].weights[o])});
    fr.level_begin[j + 1] = fr.atoms.size();
  }
  fr.build_caches();
  return fr;
}

double zonal_localization_fit(const ZonalKernel& kernel, double scale, double N, double M,
                              int grid_n) {
  double kappa = 0.0;
  for (int i = 0; i <= grid_n; ++i) {
    // geometric refinement near theta = 0 where the kernel peaks
    const double t = static_cast<double>(i) / grid_n;
    const double theta = kPi * t * t;
    const double v = std::abs(scale * kernel.eval(std::cos(theta)));
    kappa = std::max(kappa, v * std::pow(1.0 + N * theta, M) / std::pow(N, kernel.d - 1));
  }
  return kappa;
}

double localization_fit(const NeedletFrame& frame, std::size_t atom_index, double M,
                        int grid_n) {
  const int j = frame.level_of(atom_index);
  const double N = dilation_of_level(j);
  const auto& atom = frame.atoms[atom_index];
  double kappa = 0.0;
  for (int i = 0; i <= grid_n; ++i) {
    const double t = static_cast<double>(i) / grid_n;
    const double theta = kPi * t * t;
    const double v = std::abs(atom.c_diamond * frame.kernels[j].eval(std::cos(theta)));
    kappa =
        std::max(kappa, v * std::pow(1.0 + N * theta, M) / std::pow(N, 0.5 * (frame.d - 1)));
  }
  return kappa;
}

std::string NeedletFrame::manifest_json() const {
  json j;
  j["d"] = d;
  j["J"] = J;
  j["gamma"] = gamma;
  j["band_limit"] = band_limit();
  json levels = json::array();
  for (int lev = 0; lev <= J; ++lev) {
    json L;
    L["j"] = lev;
    L["atoms"] = level_begin[lev + 1] - level_begin[lev];
    L["band"] = {level_band_lo(lev), level_band_hi(lev)};
    json ah = json::array();
    for (int k = 0; k <= kernels[lev].degree(); ++k) ah.push_back(kernels[lev].coeffs[k]);
    L["cutoff_samples"] = std::move(ah);
    if (lev >= 1) {
      L["cubature_certificate"] = rules[lev].certificate;
      L["gamma_effective"] = rules[lev].gamma;
    }
    levels.push_back(std::move(L));
  }
  j["levels"] = std::move(levels);
  return j.dump(2);
}

}  // namespace newtframe
