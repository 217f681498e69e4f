#include "newtframe/cubature.hpp"

#include <algorithm>
#include <atomic>

#include <nlohmann/json.hpp>

namespace newtframe {

using json = nlohmann::json;

double CubatureRule::integrate(const std::function<double(const Vec3&)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
  return s;
}

CubatureRule simple_rule(const MaximalNet& net) {
  if (net.cell_measures.size() != net.nodes.size())
    throw ValidationError("simple_rule: partition not built");
  CubatureRule rule;
  rule.d = net.d;
  rule.level = net.level;
  rule.gamma = net.gamma;
  rule.exact_degree = 0;
  rule.nodes = net.nodes;
  rule.weights = net.cell_measures;
  rule.certificate = 0.0;
  return rule;
}

double certify_exactness(const CubatureRule& rule, int degree) {
  const std::size_t n_mom = SHExpansion::size(rule.d, degree);
  std::vector<double> moments(n_mom, 0.0);
  std::vector<std::vector<double>> partial(thread_count(), std::vector<double>(n_mom, 0.0));
  std::atomic<int> tid{0};
  parallel_for(rule.nodes.size(), [&](std::size_t lo, std::size_t hi) {
    auto& acc = partial[tid.fetch_add(1)];
    std::vector<double> row;
    for (std::size_t i = lo; i < hi; ++i) {
      sh_row(rule.d, degree, rule.nodes[i], row);
      const double w = rule.weights[i];
      for (std::size_t u = 0; u < n_mom; ++u) acc[u] += w * row[u];
    }
  });
  for (const auto& acc : partial)
    for (std::size_t u = 0; u < n_mom; ++u) moments[u] += acc[u];
  moments[0] -= std::sqrt(sphere_area(rule.d));  // int Y_00 = omega_d * (1/sqrt(omega_d))
  double worst = 0.0;
  for (double v : moments) worst = std::max(worst, std::abs(v));
  return worst;
}

static CubatureRule equispaced_rule(int level, double gamma) {
  const MaximalNet net = build_maximal_net(2, level, gamma);
  const int target = (1 << (level + 1));
  CubatureRule rule;
  rule.d = 2;
  rule.level = level;
  rule.gamma = gamma;
  rule.nodes = net.nodes;
  const int n = static_cast<int>(net.nodes.size());
  if (n < target + 1)
    throw InfeasibleError("equispaced rule: too few nodes for the target degree",
                          static_cast<double>(target + 1 - n));
  rule.weights.assign(n, 2.0 * kPi / n);
  rule.exact_degree = target;
  rule.certificate = certify_exactness(rule, target);
  return rule;
}

namespace {

struct MomentSystem {
  Eigen::MatrixXd A;   // n_mom x n_nodes basis values
  Eigen::VectorXd b;   // exact moments
};

MomentSystem build_moment_system(const std::vector<Vec3>& nodes, int degree) {
  MomentSystem sys;
  const std::size_t n_mom = SHExpansion::size(3, degree);
  sys.A.resize(static_cast<Eigen::Index>(n_mom), static_cast<Eigen::Index>(nodes.size()));
  parallel_for(nodes.size(), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> row;
    for (std::size_t i = lo; i < hi; ++i) {
      sh_row(3, degree, nodes[i], row);
      for (std::size_t u = 0; u < n_mom; ++u)
        sys.A(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i)) = row[u];
    }
  });
  sys.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_mom));
  sys.b(0) = std::sqrt(sphere_area(3));
  return sys;
}

}  // namespace

static bool solve_weights_s2(const MaximalNet& net, int degree, double lo_bound,
                             double hi_bound, std::vector<double>& out) {
  const MomentSystem sys = build_moment_system(net.nodes, degree);
  const Eigen::Index n = static_cast<Eigen::Index>(net.nodes.size());
  Eigen::VectorXd w0(n);
  for (Eigen::Index i = 0; i < n; ++i) w0(i) = net.cell_measures[i];

  Eigen::VectorXd w = w0;
  std::vector<bool> fixed(net.nodes.size(), false);
  for (int pass = 0; pass < 25; ++pass) {
    // minimum-norm correction on the free variables
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!fixed[i]) free_idx.push_back(i);
    if (free_idx.size() < static_cast<std::size_t>(sys.A.rows())) return false;

    Eigen::MatrixXd Af(sys.A.rows(), static_cast<Eigen::Index>(free_idx.size()));
    for (std::size_t c = 0; c < free_idx.size(); ++c) Af.col(c) = sys.A.col(free_idx[c]);
    const Eigen::VectorXd r = sys.b - sys.A * w;
    Eigen::MatrixXd G = Af * Af.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success) return false;
    Eigen::VectorXd lambda = ldlt.solve(r);
    lambda += ldlt.solve(r - G * lambda);  // one refinement step
    const Eigen::VectorXd corr = Af.transpose() * lambda;
    for (std::size_t c = 0; c < free_idx.size(); ++c) w(free_idx[c]) += corr(c);

    bool clipped = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      if (w(i) < lo_bound) {
        w(i) = lo_bound;
        fixed[i] = true;
        clipped = true;
      } else if (w(i) > hi_bound) {
        w(i) = hi_bound;
        fixed[i] = true;
        clipped = true;
      }
    }
    if (!clipped) {
      out.assign(w.data(), w.data() + n);
      return true;
    }
  }
  return false;
}

CubatureRule exact_rule(int d, int level, double gamma) {
  if (level < 1) throw ValidationError("exact_rule: level >= 1 required");
  if (d == 2) return equispaced_rule(level, gamma);
  if (d != 3) throw ValidationError("exact_rule: d in {2, 3}");

  const int degree = 1 << (level + 1);
  const double c7 = 10.0;
  double g = gamma;
  double last_residual = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    MaximalNet net = build_maximal_net(3, level, g);
    build_partition(net);
    const double scale = std::pow(std::ldexp(1.0, -level), 2);  // 2^{-j(d-1)}
    std::vector<double> w;
    if (solve_weights_s2(net, degree, scale / c7, scale * c7, w)) {
      CubatureRule rule;
      rule.d = 3;
      rule.level = level;
      rule.gamma = g;
      rule.exact_degree = degree;
      rule.nodes = net.nodes;
      rule.weights = std::move(w);
      rule.certificate = certify_exactness(rule, degree);
      if (rule.certificate <= 1e-10) return rule;
      last_residual = rule.certificate;
    } else {
      last_residual = -1.0;
    }
    g *= 0.72;  // densify and retry
  }
  throw InfeasibleError("exact_rule: no certified weights at level " + std::to_string(level),
                        last_residual);
}

std::string CubatureRule::to_json() const {
  json j;
  j["d"] = d;
  j["j"] = level;
  j["gamma"] = gamma;
  j["exact_degree"] = exact_degree;
  j["certificate"] = certificate;
  json ns = json::array();
  for (const auto& p : nodes) {
    if (d == 2)
      ns.push_back({p.x(), p.y()});
    else
      ns.push_back({p.x(), p.y(), p.z()});
  }
  j["nodes"] = std::move(ns);
  j["weights"] = weights;
  return j.dump(2);
}

CubatureRule CubatureRule::from_json(const std::string& text) {
  const json j = json::parse(text);
  CubatureRule rule;
  rule.d = j.at("d").get<int>();
  rule.level = j.at("j").get<int>();
  rule.gamma = j.at("gamma").get<double>();
  rule.exact_degree = j.at("exact_degree").get<int>();
  rule.certificate = j.value("certificate", 0.0);
  for (const auto& row : j.at("nodes"))
    rule.nodes.emplace_back(row[0].get<double>(), row[1].get<double>(),
                            row.size() > 2 ? row[2].get<double>() : 0.0);
  rule.weights = j.at("weights").get<std::vector<double>>();
  return rule;
}

}  // namespace newtframe
