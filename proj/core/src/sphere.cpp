#include "newtframe/sphere.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <tuple>

#include <nlohmann/json.hpp>

namespace newtframe {

using json = nlohmann::json;

Vec3 normalized_point(const Vec3& x) {
  const double n = x.norm();
  if (!(n > 0.0)) throw ValidationError("cannot normalize the zero vector");
  return x / n;
}

Vec3 circle_point(double phi) { return Vec3(std::cos(phi), std::sin(phi), 0.0); }

double geodesic_distance(const Vec3& x, const Vec3& y) {
  return std::acos(clamp_to_unit(x.dot(y)));
}

double cap_area(int d, double r) {
  if (r < 0.0 || r > kPi + 1e-12) throw ValidationError("cap radius outside [0, pi]");
  r = std::min(r, kPi);
  if (d == 2) return 2.0 * r;
  if (d == 3) return 2.0 * kPi * (1.0 - std::cos(r));
  const double wd1 = sphere_area(d - 1);
  return wd1 * integrate_gl([d](double v) { return std::pow(std::sin(v), d - 2); }, 0.0, r);
}

// ---------------------------------------------------------------------------
// candidate grids

std::vector<Vec3> icosphere_grid(double target_edge) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> base = {
      {-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : base) v.normalize();
  static const int faces[20][3] = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  const double base_edge = geodesic_distance(base[0], base[11]);  // ~1.1071
  const int n = std::max(1, static_cast<int>(std::ceil(1.3 * base_edge / target_edge)));

  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, int> seen;
  std::vector<Vec3> out;
  auto quantize = [](const Vec3& v) {
    const double q = 1e8;
    return std::make_tuple(std::llround(v.x() * q), std::llround(v.y() * q),
                           std::llround(v.z() * q));
  };
  for (const auto& f : faces) {
    const Vec3 &a = base[f[0]], &b = base[f[1]], &c = base[f[2]];
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n - i; ++j) {
        const int k = n - i - j;
        Vec3 p = (i * a + j * b + k * c) / static_cast<double>(n);
        p.normalize();
        auto key = quantize(p);
        if (seen.emplace(key, static_cast<int>(out.size())).second) out.push_back(p);
      }
    }
  }
  return out;
}

std::vector<Vec3> equal_area_grid_s2(std::size_t approx_size) {
  const std::size_t nz = std::max<std::size_t>(2, std::llround(std::sqrt(approx_size / 2.0)));
  const std::size_t nphi = 2 * nz;
  std::vector<Vec3> pts;
  pts.reserve(nz * nphi);
  for (std::size_t i = 0; i < nz; ++i) {
    const double z = -1.0 + (i + 0.5) * 2.0 / nz;
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (std::size_t k = 0; k < nphi; ++k) {
      const double phi = (k + 0.5) * 2.0 * kPi / nphi;
      pts.emplace_back(s * std::cos(phi), s * std::sin(phi), z);
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// bucket search

// Largest longitude gap |dphi| for which some colatitude theta_b in [t0, t1]
// stays within geodesic distance r of a point at colatitude theta_p:
// cos dist = cos t_p cos t_b + sin t_p sin t_b cos dphi.
static double band_phi_halfwidth(double theta_p, double r, double t0, double t1) {
  if (r >= kPi) return kPi;
  auto need = [&](double tb) {
    const double A = std::cos(theta_p) * std::cos(tb);
    const double B = std::sin(theta_p) * std::sin(tb);
    const double num = std::cos(r) - A;
    if (B < 1e-12) return num <= 0.0 ? kPi : 0.0;
    const double c = num / B;
    if (c <= -1.0) return kPi;
    if (c >= 1.0) return 0.0;
    return std::acos(c);
  };
  double w = std::max(need(t0), need(t1));
  // interior extremum of the ratio at cos tb = cos theta_p / cos r
  const double cr = std::cos(r);
  if (std::abs(cr) > 1e-12) {
    const double ct = std::cos(theta_p) / cr;
    if (ct >= std::cos(t1) && ct <= std::cos(t0) && std::abs(ct) <= 1.0)
      w = std::max(w, need(std::acos(ct)));
  }
  return w;
}

// Applies fn to every bucket index whose (theta-band x phi-cell) region can
// intersect the cap B(p, r); exact band/longitude bounds plus one cell margin.
template <typename Fn>
static void for_each_bucket_in_cap(const Vec3& p, double r, int n_band, int n_lon, Fn&& fn) {
  const double band_h = kPi / n_band;
  const double lon_h = 2.0 * kPi / n_lon;
  const double theta = std::acos(clamp_to_unit(p.z()));
  double phi = std::atan2(p.y(), p.x());
  if (phi < 0) phi += 2.0 * kPi;
  const int b_lo = std::max(0, static_cast<int>(std::floor((theta - r) / band_h)));
  const int b_hi = std::min(n_band - 1, static_cast<int>(std::floor((theta + r) / band_h)));
  const int l0 = std::min(n_lon - 1, static_cast<int>(phi / lon_h));
  for (int b = b_lo; b <= b_hi; ++b) {
    const double w = band_phi_halfwidth(theta, r, b * band_h, (b + 1) * band_h);
    const int span = static_cast<int>(std::ceil(w / lon_h)) + 1;
    if (2 * span + 1 >= n_lon) {
      for (int l = 0; l < n_lon; ++l) fn(static_cast<std::size_t>(b) * n_lon + l);
    } else {
      for (int dl = -span; dl <= span; ++dl) {
        const int l = ((l0 + dl) % n_lon + n_lon) % n_lon;
        fn(static_cast<std::size_t>(b) * n_lon + l);
      }
    }
  }
}

void MaximalNet::rebuild_search_index() {
  const double target = std::max(delta, 1e-3);
  n_band_ = std::max(1, static_cast<int>(std::ceil(kPi / target)));
  if (d == 2) n_band_ = 1;
  const int n_lon = std::max(1, static_cast<int>(std::ceil(2.0 * kPi / target)));
  buckets_.assign(static_cast<std::size_t>(n_band_) * n_lon, {});
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    buckets_[bucket_id(nodes[i])].push_back(i);
}

int MaximalNet::bucket_id(const Vec3& x) const {
  const int n_lon = static_cast<int>(buckets_.size()) / n_band_;
  int band = 0;
  if (n_band_ > 1) {
    band = static_cast<int>((std::acos(clamp_to_unit(x.z())) / kPi) * n_band_);
    band = std::clamp(band, 0, n_band_ - 1);
  }
  double phi = std::atan2(x.y(), x.x());
  if (phi < 0) phi += 2.0 * kPi;
  int lon = static_cast<int>((phi / (2.0 * kPi)) * n_lon);
  lon = std::clamp(lon, 0, n_lon - 1);
  return band * n_lon + lon;
}

int MaximalNet::cell_of(const Vec3& x) const {
  if (nodes.empty()) throw ValidationError("empty net");
  if (buckets_.empty()) throw ValidationError("search index not built");
  const int n_lon = static_cast<int>(buckets_.size()) / n_band_;

  double radius = std::max(delta + cover_slack, 1e-3) * 1.05;
  while (true) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for_each_bucket_in_cap(x, std::min(radius, kPi), n_band_, n_lon, [&](std::size_t bk) {
      for (int idx : buckets_[bk]) {
        const double dist = geodesic_distance(x, nodes[idx]);
        if (dist < best_d || (dist == best_d && idx < best)) {
          best_d = dist;
          best = idx;
        }
      }
    });
    // every node within `radius` was scanned, so a hit below it is the nearest
    if (best >= 0 && best_d <= radius) return best;
    if (radius >= kPi) return best;
    radius *= 2.0;
  }
}

double MaximalNet::distance_to_net(const Vec3& x) const {
  return geodesic_distance(x, nodes[cell_of(x)]);
}

std::vector<int> MaximalNet::nodes_in_cap(const Vec3& x, double r) const {
  std::vector<int> out;
  const int n_lon = static_cast<int>(buckets_.size()) / n_band_;
  for_each_bucket_in_cap(x, std::min(r, kPi), n_band_, n_lon, [&](std::size_t bk) {
    for (int idx : buckets_[bk])
      if (geodesic_distance(x, nodes[idx]) <= r) out.push_back(idx);
  });
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// net construction

static MaximalNet equispaced_circle_net(int level, double gamma, double delta) {
  MaximalNet net;
  net.d = 2;
  net.level = level;
  net.gamma = gamma;
  net.delta = delta;
  const int n = std::max(1, static_cast<int>(std::floor(2.0 * kPi / net.delta)));
  for (int i = 0; i < n; ++i) net.nodes.push_back(circle_point(2.0 * kPi * i / n));
  net.cover_slack = 0.0;
  net.rebuild_search_index();
  return net;
}

static MaximalNet greedy_net_s2(int level, double gamma, double delta);

MaximalNet build_maximal_net(int d, int level, double gamma) {
  if (d != 2 && d != 3) throw ValidationError("maximal nets implemented for d in {2, 3}");
  if (level < 0) throw ValidationError("level must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
  const double delta = gamma * std::ldexp(1.0, 1 - level);
  if (d == 2) return equispaced_circle_net(level, gamma, delta);
  return greedy_net_s2(level, gamma, delta);
}

MaximalNet build_maximal_net_delta(int d, double delta) {
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  if (d == 2) return equispaced_circle_net(0, delta / 2.0, delta);
  if (d != 3) throw ValidationError("maximal nets implemented for d in {2, 3}");
  return greedy_net_s2(0, delta / 2.0, delta);
}

static MaximalNet greedy_net_s2(int level, double gamma, double delta) {
  MaximalNet net;
  net.d = 3;
  net.level = level;
  net.gamma = gamma;
  net.delta = delta;

  const double grid_edge = std::min(net.delta / 8.0, 0.35);
  const std::vector<Vec3> cand = icosphere_grid(grid_edge);
  net.cover_slack = grid_edge;

  const std::size_t m = cand.size();
  std::vector<double> dist(m, std::numeric_limits<double>::infinity());

  // coarse buckets over candidates for localized distance updates
  const int nb_band = std::max(1, static_cast<int>(std::ceil(kPi / net.delta)));
  const int nb_lon = 2 * nb_band;
  std::vector<std::vector<int>> cbuckets(static_cast<std::size_t>(nb_band) * nb_lon);
  auto cbucket_of = [&](const Vec3& x) {
    int band = std::clamp(
        static_cast<int>((std::acos(clamp_to_unit(x.z())) / kPi) * nb_band), 0, nb_band - 1);
    double phi = std::atan2(x.y(), x.x());
    if (phi < 0) phi += 2.0 * kPi;
    int lon = std::clamp(static_cast<int>((phi / (2.0 * kPi)) * nb_lon), 0, nb_lon - 1);
    return band * nb_lon + lon;
  };
  for (int i = 0; i < static_cast<int>(m); ++i) cbuckets[cbucket_of(cand[i])].push_back(i);

  using Entry = std::pair<double, int>;  // (-dist, index): min-heap on pair gives max-dist first
  std::priority_queue<Entry> heap;

  auto update_near = [&](const Vec3& p, double radius) {
    for_each_bucket_in_cap(p, std::min(radius, kPi), nb_band, nb_lon, [&](std::size_t bk) {
      for (int ci : cbuckets[bk]) {
        const double dd = geodesic_distance(p, cand[ci]);
        if (dd < dist[ci]) {
          dist[ci] = dd;
          heap.emplace(dd, -ci);
        }
      }
    });
  };

  // first node: candidate 0 (fixed seed ordering)
  net.nodes.push_back(cand[0]);
  for (int ci = 0; ci < static_cast<int>(m); ++ci) {
    dist[ci] = geodesic_distance(cand[0], cand[ci]);
    heap.emplace(dist[ci], -ci);
  }

  double last_radius = kPi;
  while (!heap.empty()) {
    const auto [dd, negidx] = heap.top();
    heap.pop();
    const int ci = -negidx;
    if (dd != dist[ci]) continue;  // stale entry
    if (dd < net.delta) break;
    net.nodes.push_back(cand[ci]);
    const double radius = std::min(last_radius, dd) * 1.0001 + 1e-12;
    last_radius = dd;
    update_near(cand[ci], std::min(radius, kPi));
  }
  net.rebuild_search_index();
  return net;
}

void build_partition(MaximalNet& net, int min_points_per_cell) {
  if (net.d == 2) {
    // analytic arcs between angular midpoints
    const int n = static_cast<int>(net.nodes.size());
    std::vector<std::pair<double, int>> ang(n);
    for (int i = 0; i < n; ++i) {
      double phi = std::atan2(net.nodes[i].y(), net.nodes[i].x());
      if (phi < 0) phi += 2.0 * kPi;
      ang[i] = {phi, i};
    }
    std::sort(ang.begin(), ang.end());
    net.cell_measures.assign(n, 2.0 * kPi);
    if (n > 1) {
      for (int s = 0; s < n; ++s) {
        const double prev = ang[(s + n - 1) % n].first;
        const double next = ang[(s + 1) % n].first;
        double gap_prev = ang[s].first - prev;
        if (gap_prev <= 0) gap_prev += 2.0 * kPi;
        double gap_next = next - ang[s].first;
        if (gap_next <= 0) gap_next += 2.0 * kPi;
        net.cell_measures[ang[s].second] = 0.5 * (gap_prev + gap_next);
      }
    }
    return;
  }
  const std::size_t total = std::max<std::size_t>(
      200000, static_cast<std::size_t>(min_points_per_cell) * net.nodes.size());
  const std::vector<Vec3> grid = equal_area_grid_s2(total);
  const double w = sphere_area(3) / static_cast<double>(grid.size());
  std::vector<std::vector<double>> partial(thread_count(),
                                           std::vector<double>(net.nodes.size(), 0.0));
  std::atomic<int> tid{0};
  parallel_for(grid.size(), [&](std::size_t lo, std::size_t hi) {
    auto& acc = partial[tid.fetch_add(1)];
    for (std::size_t g = lo; g < hi; ++g) acc[net.cell_of(grid[g])] += w;
  });
  net.cell_measures.assign(net.nodes.size(), 0.0);
  for (const auto& acc : partial)
    for (std::size_t i = 0; i < acc.size(); ++i) net.cell_measures[i] += acc[i];
}

// ---------------------------------------------------------------------------
// serialization

std::string MaximalNet::to_json() const {
  json j;
  j["d"] = d;
  j["j"] = level;
  j["gamma"] = gamma;
  j["delta"] = delta;
  j["cover_slack"] = cover_slack;
  json ns = json::array();
  for (const auto& p : nodes) {
    if (d == 2)
      ns.push_back({p.x(), p.y()});
    else
      ns.push_back({p.x(), p.y(), p.z()});
  }
  j["nodes"] = std::move(ns);
  j["weights"] = cell_measures;
  return j.dump(2);
}

MaximalNet MaximalNet::from_json(const std::string& text) {
  const json j = json::parse(text);
  MaximalNet net;
  net.d = j.at("d").get<int>();
  net.level = j.at("j").get<int>();
  net.gamma = j.at("gamma").get<double>();
  net.delta = j.contains("delta") ? j["delta"].get<double>()
                                  : net.gamma * std::ldexp(1.0, 1 - net.level);
  net.cover_slack = j.value("cover_slack", 0.0);
  for (const auto& row : j.at("nodes")) {
    Vec3 p(row[0].get<double>(), row[1].get<double>(),
           row.size() > 2 ? row[2].get<double>() : 0.0);
    net.nodes.push_back(p);
  }
  if (j.contains("weights")) net.cell_measures = j["weights"].get<std::vector<double>>();
  net.rebuild_search_index();
  return net;
}

}  // namespace newtframe
