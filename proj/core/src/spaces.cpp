#include "newtframe/spaces.hpp"

#include <algorithm>
#include <cmath>

namespace newtframe {

CoeffSeq make_coeff_seq(const NeedletFrame& frame, const std::vector<double>& dense,
                        double drop_tol) {
  if (dense.size() != frame.size()) throw ValidationError("make_coeff_seq: size mismatch");
  CoeffSeq out;
  for (std::size_t i = 0; i < dense.size(); ++i)
    if (std::abs(dense[i]) > drop_tol) out.items.push_back({frame.atoms[i].idx, dense[i]});
  return out;
}

double seq_besov_norm(const CoeffSeq& h, const SmoothnessTriple& t, int d) {
  if (!(t.p > 0) || !(t.q > 0)) throw ValidationError("sequence norm: p, q > 0");
  const double expo = t.s + (d - 1) * (0.5 - 1.0 / t.p);
  double total = 0.0;
  std::size_t i = 0;
  while (i < h.items.size()) {
    const int j = h.items[i].idx.level;
    double level_p = 0.0;
    while (i < h.items.size() && h.items[i].idx.level == j) {
      level_p += std::pow(std::abs(h.items[i].value), t.p);
      ++i;
    }
    const double term = std::pow(2.0, j * expo) * std::pow(level_p, 1.0 / t.p);
    total += std::pow(term, t.q);
  }
  return std::pow(total, 1.0 / t.q);
}

namespace {

// grids carrying the surface measure
struct MeasuredGrid {
  std::vector<Vec3> pts;
  double w = 0.0;  // equal weights
};

MeasuredGrid measured_grid(int d, double resolution) {
  MeasuredGrid g;
  if (d == 2) {
    const int n = std::max(64, static_cast<int>(std::ceil(2.0 * kPi / resolution)));
    for (int i = 0; i < n; ++i) g.pts.push_back(circle_point(2.0 * kPi * i / n));
    g.w = 2.0 * kPi / n;
    return g;
  }
  const std::size_t target =
      static_cast<std::size_t>(std::ceil(sphere_area(3) / (resolution * resolution)));
  g.pts = equal_area_grid_s2(std::max<std::size_t>(target, 2000));
  g.w = sphere_area(3) / static_cast<double>(g.pts.size());
  return g;
}

}  // namespace

double seq_tl_norm(const CoeffSeq& h, const SmoothnessTriple& t, int d,
                   const std::vector<Vec3>& centers, double gamma, int grid_factor) {
  if (h.items.size() != centers.size())
    throw ValidationError("seq_tl_norm: centers must align with items");
  if (h.items.empty()) return 0.0;
  int finest = 0;
  for (const auto& it : h.items) finest = std::max(finest, it.idx.level);
  const double finest_cap = gamma * std::ldexp(1.0, 1 - finest);
  const MeasuredGrid grid = measured_grid(d, finest_cap / grid_factor);

  std::vector<double> qsum(grid.pts.size(), 0.0);
  for (std::size_t i = 0; i < h.items.size(); ++i) {
    const int j = h.items[i].idx.level;
    const double cap_r = gamma * std::ldexp(1.0, 1 - j);
    const double capm = cap_area(d, std::min(cap_r, kPi));
    const double amp = std::pow(capm, -t.s / (d - 1) - 0.5) * std::abs(h.items[i].value);
    const double term = std::pow(amp, t.q);
    const double cu = std::cos(std::min(cap_r, kPi));
    for (std::size_t gidx = 0; gidx < grid.pts.size(); ++gidx)
      if (centers[i].dot(grid.pts[gidx]) > cu) qsum[gidx] += term;
  }
  double lp = 0.0;
  for (double v : qsum) lp += grid.w * std::pow(v, t.p / t.q);
  return std::pow(lp, 1.0 / t.p);
}

// ---------------------------------------------------------------------------

namespace {

// Phi_j * f coefficient mask: j = 0 keeps degree 0; j >= 1 weights degree k
// by phi(k / 2^{j-1}).
SHExpansion block_expansion(const SHExpansion& f, int j, const CutoffPair& cutoff) {
  SHExpansion out(f.d, f.max_degree);
  if (j == 0) {
    out.coeffs[0] = f.coeffs[0];
    return out;
  }
  const double n = std::ldexp(1.0, j - 1);
  for (int k = 1; k <= f.max_degree; ++k) {
    const double w = cutoff.phi(k / n);
    if (w == 0.0) continue;
    const std::size_t off = SHExpansion::offset(f.d, k);
    const std::size_t cnt = dim_harmonics(k, f.d);
    for (std::size_t nu = 0; nu < cnt; ++nu) out.coeffs[off + nu] = w * f.coeffs[off + nu];
  }
  return out;
}

// blocks j with 2^{j-2} >= deg are empty (supp phi in (1/2, 2))
int top_block(const SHExpansion& f) {
  int j = 2;
  while (j < 40 && (1 << (j - 2)) < std::max(1, f.max_degree)) ++j;
  return j;
}

}  // namespace

double function_space_norm(const SHExpansion& f, const SmoothnessTriple& t, char kind,
                           const CutoffPair& cutoff) {
  if (kind != 'B' && kind != 'F') throw ValidationError("function_space_norm: kind B|F");
  const int jmax = top_block(f);

  if (t.p == 2.0 && t.q == 2.0) {
    // exact coefficient side: both norms collapse to weighted block L2 sums
    double total = 0.0;
    for (int j = 0; j <= jmax; ++j) {
      const SHExpansion blk = block_expansion(f, j, cutoff);
      const double b2 = blk.norm_l2();
      total += std::pow(2.0, 2.0 * t.s * j) * b2 * b2;
    }
    return std::sqrt(total);
  }

  // grid route
  const double resolution = kPi / std::max(64, 6 * (f.max_degree + 1));
  const MeasuredGrid grid = measured_grid(f.d, resolution);
  std::vector<std::vector<double>> blocks;
  for (int j = 0; j <= jmax; ++j) {
    const SHExpansion blk = block_expansion(f, j, cutoff);
    bool zero = true;
    for (double c : blk.coeffs)
      if (c != 0.0) {
        zero = false;
        break;
      }
    std::vector<double> vals(grid.pts.size(), 0.0);
    if (!zero) {
      parallel_for(grid.pts.size(), [&](std::size_t lo, std::size_t hi) {
        std::vector<double> row;
        for (std::size_t g = lo; g < hi; ++g) {
          sh_row(f.d, blk.max_degree, grid.pts[g], row);
          double s = 0.0;
          for (std::size_t u = 0; u < blk.coeffs.size(); ++u) s += blk.coeffs[u] * row[u];
          vals[g] = s;
        }
      });
    }
    blocks.push_back(std::move(vals));
  }

  if (kind == 'B') {
    double total = 0.0;
    for (int j = 0; j < static_cast<int>(blocks.size()); ++j) {
      double lp = 0.0;
      for (double v : blocks[j]) lp += grid.w * std::pow(std::abs(v), t.p);
      const double term = std::pow(2.0, t.s * j) * std::pow(lp, 1.0 / t.p);
      total += std::pow(term, t.q);
    }
    return std::pow(total, 1.0 / t.q);
  }
  double lp = 0.0;
  for (std::size_t g = 0; g < grid.pts.size(); ++g) {
    double qs = 0.0;
    for (int j = 0; j < static_cast<int>(blocks.size()); ++j)
      qs += std::pow(std::pow(2.0, t.s * j) * std::abs(blocks[j][g]), t.q);
    lp += grid.w * std::pow(qs, t.p / t.q);
  }
  return std::pow(lp, 1.0 / t.p);
}

double hardy_norm_estimate(const SHExpansion& boundary, double p, int l_max,
                           int angular_n) {
  const int d = boundary.d;
  const double resolution =
      angular_n > 0 ? kPi / angular_n : kPi / std::max(64, 4 * (boundary.max_degree + 1));
  const MeasuredGrid grid = measured_grid(d, resolution);
  std::vector<double> radii;
  for (int l = 0; l <= l_max; ++l) radii.push_back(1.0 - std::ldexp(1.0, -l));

  std::vector<double> sup(grid.pts.size(), 0.0);
  parallel_for(grid.pts.size(), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> row;
    for (std::size_t g = lo; g < hi; ++g) {
      sh_row(d, boundary.max_degree, grid.pts[g], row);
      double best = 0.0;
      for (double r : radii) {
        double s = 0.0, rk = 1.0;
        for (int k = 0; k <= boundary.max_degree; ++k) {
          const std::size_t off = SHExpansion::offset(d, k);
          const std::size_t cnt = dim_harmonics(k, d);
          double blockv = 0.0;
          for (std::size_t nu = 0; nu < cnt; ++nu)
            blockv += boundary.coeffs[off + nu] * row[off + nu];
          s += rk * blockv;
          rk *= r;
        }
        best = std::max(best, std::abs(s));
      }
      sup[g] = best;
    }
  });
  double lp = 0.0;
  for (double v : sup) lp += grid.w * std::pow(v, p);
  return std::pow(lp, 1.0 / p);
}

}  // namespace newtframe
