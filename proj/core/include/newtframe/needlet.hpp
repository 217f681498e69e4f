#pragma once

#include <memory>
#include <string>
#include <vector>

#include "newtframe/cubature.hpp"

namespace newtframe {

// Smooth Littlewood-Paley cutoff pair. a_hat is built from a mollified step
// (normalized integral of the exp(-1/(t(1-t))) bump) so that the quadratic
// partition identity a^2(u) + a^2(u/2) = 1 on [1, 2] holds to roundoff.
// phi (the space-norm cutoff) defaults to a_hat itself.
class CutoffPair {
 public:
  explicit CutoffPair(int smoothness_order = 6);

  double smooth_step(double t) const;  // 0 on (-inf,0], 1 on [1,inf)
  double a_hat(double u) const;
  double a_hat_sq(double u) const;
  double phi(double u) const { return a_hat(u); }
  int smoothness_order() const { return order_; }

 private:
  int order_;
  std::vector<double> cum_;  // cumulative integral of the bump on [0, 1]
  double total_ = 0.0;
  static constexpr int kPanels = 2048;
};

struct NeedletAtom {
  NodeIndex idx;
  Vec3 center;
  double c_diamond = 0.0;  // normalization C_xi = w_xi^{1/2}
};

// The needlet frame Psi over levels 0..J: psi_xi = w_xi^{1/2} L_j(xi . x),
// L_j = sum a(k/2^{j-1}) Z_k, self-dual (Remark 3.12 convention).
class NeedletFrame {
 public:
  int d = 3;
  int J = 4;
  double gamma = 0.5;
  std::shared_ptr<const CutoffPair> cutoff;

  std::vector<CubatureRule> rules;    // rules[j], j >= 1 (rules[0] unused)
  std::vector<ZonalKernel> kernels;   // L_j, j = 0..J
  std::vector<NeedletAtom> atoms;     // all levels, level-major order
  std::vector<std::size_t> level_begin;  // size J+2, atoms of level j in [b[j], b[j+1])

  int band_limit() const { return 1 << J; }          // max degree of any psi
  int level_band_lo(int j) const;                    // smallest k with a(k/2^{j-1}) != 0
  int level_band_hi(int j) const;                    // largest such k
  std::size_t size() const { return atoms.size(); }
  int level_of(std::size_t i) const;

  // cached Y_{k nu}(xi) for k in the level band, contiguous per atom
  const std::vector<double>& band_rows(std::size_t i) const { return band_rows_[i]; }

  double psi_l2_norm(std::size_t i) const;

  // <f, psi_xi> for all atoms, exact coefficient-side sums
  std::vector<double> analyze(const SHExpansion& f) const;
  // sum h_xi psi_xi as an expansion of degree 2^J
  SHExpansion synthesize(const std::vector<double>& h) const;
  // <f, psi_i> for one atom
  double analyze_one(const SHExpansion& f, std::size_t i) const;
  // out += scale * psi_i (expansion side)
  void add_atom(SHExpansion& out, std::size_t i, double scale) const;

  std::string manifest_json() const;

  void build_caches();

 private:
  std::vector<std::vector<double>> band_rows_;
  std::vector<double> kernel_sq_at_one_;  // sum_k a^2 Z_k(1) per level
};

NeedletFrame build_needlet_frame(int d, int J, double gamma,
                                 std::shared_ptr<const CutoffPair> cutoff = nullptr);

// Fitted localization constant: max over a polar-angle grid of
// |psi_i(x)| (1 + N rho)^M / N^{(d-1)/2}, eq. (3.22)-style envelope.
double localization_fit(const NeedletFrame& frame, std::size_t atom_index, double M,
                        int grid_n = 4096);

// Same envelope fit for an arbitrary zonal kernel with dilation N:
// max |scale * L(cos theta)| (1 + N theta)^M / N^{d-1}.
double zonal_localization_fit(const ZonalKernel& kernel, double scale, double N, double M,
                              int grid_n = 4096);

}  // namespace newtframe
