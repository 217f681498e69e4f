#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace newtframe {

using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

// Frame index: dyadic level j and ordinal within the level-j node set.
struct NodeIndex {
  int level = 0;
  int ordinal = 0;
  friend bool operator==(const NodeIndex&, const NodeIndex&) = default;
  friend auto operator<=>(const NodeIndex&, const NodeIndex&) = default;
};

// Dilation factor N_xi = 2^{j-1} (level 0 carries 1/2).
inline double dilation_of_level(int j) { return std::ldexp(1.0, j - 1); }

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InfeasibleError : std::runtime_error {
  double residual = 0.0;
  explicit InfeasibleError(const std::string& what, double res = 0.0)
      : std::runtime_error(what), residual(res) {}
};

// Surface measure of S^{d-1}: omega_d = 2 pi^{d/2} / Gamma(d/2).
inline double sphere_area(int d) {
  return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
}

inline double clamp_to_unit(double u) { return u < -1.0 ? -1.0 : (u > 1.0 ? 1.0 : u); }

int thread_count();

// Splits [0, n) into contiguous chunks, one worker thread per chunk.
// Deterministic partitioning; fn(begin, end) must not share mutable state.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Gauss-Legendre nodes/weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre(int n);

// Integrates f over [a, b] with a composite Gauss-Legendre rule.
double integrate_gl(const std::function<double(double)>& f, double a, double b,
                    int panels = 8, int order = 32);

}  // namespace newtframe
