#include "ionread/localization.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ionread/rng.hpp"
#include "json.hpp"

namespace ionread::localization {

void TrapParameters::validate() const {
  if (!(ion_mass > 0)) throw std::invalid_argument("trap: ion_mass must be > 0");
  if (!(trap_frequency > 0)) throw std::invalid_argument("trap: trap_frequency must be > 0");
  if (!(ionization_degree > 0))
    throw std::invalid_argument("trap: ionization_degree must be > 0");
  if (!(vacuum_permittivity > 0))
    throw std::invalid_argument("trap: vacuum_permittivity must be > 0");
  if (!(electron_charge > 0)) throw std::invalid_argument("trap: electron_charge must be > 0");
}

double TrapParameters::length_scale() const {
  validate();
  double z2e2 = ionization_degree * ionization_degree * electron_charge * electron_charge;
  double denom = 4.0 * M_PI * vacuum_permittivity * ion_mass * trap_frequency * trap_frequency;
  return std::cbrt(z2e2 / denom);
}

namespace {

// Force balance on ion m: u_m - sum_{n<m} (u_m-u_n)^-2 + sum_{n>m} (u_n-u_m)^-2.
void gradient(const std::vector<double>& u, std::vector<double>& g) {
  const int n = static_cast<int>(u.size());
  for (int m = 0; m < n; ++m) {
    double s = u[m];
    for (int k = 0; k < m; ++k) {
      double d = u[m] - u[k];
      s -= 1.0 / (d * d);
    }
    for (int k = m + 1; k < n; ++k) {
      double d = u[k] - u[m];
      s += 1.0 / (d * d);
    }
    g[m] = s;
  }
}

}  // namespace

double equilibrium_gradient_norm(const std::vector<double>& u) {
  std::vector<double> g(u.size());
  gradient(u, g);
  double norm = 0.0;
  for (double v : g) norm = std::max(norm, std::abs(v));
  return norm;
}

std::vector<double> equilibrium_positions_dimensionless(int n_ions, double tol, int max_iter) {
  if (n_ions < 1) throw std::invalid_argument("equilibrium_positions: n_ions must be >= 1");
  if (n_ions == 1) return {0.0};

  const int n = n_ions;
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i)
    u[i] = 0.8 * (-0.5 * n + static_cast<double>(i) * n / (n - 1));

  std::vector<double> g(n), trial(n), gt(n);
  auto max_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };

  gradient(u, g);
  for (int iter = 0; iter < max_iter; ++iter) {
    double gn = max_norm(g);
    if (gn < tol) return u;

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int m = 0; m < n; ++m) {
      double diag = 1.0;
      for (int k = 0; k < n; ++k) {
        if (k == m) continue;
        double d = std::abs(u[m] - u[k]);
        double inv3 = 2.0 / (d * d * d);
        diag += inv3;
        jac(m, k) = -inv3;
      }
      jac(m, m) = diag;
    }
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) rhs(i) = -g[i];
    Eigen::VectorXd step = jac.partialPivLu().solve(rhs);

    // Damped update: halve the step until the residual shrinks and the chain
    // ordering survives.
    double damp = 1.0;
    bool accepted = false;
    for (int back = 0; back < 60; ++back) {
      for (int i = 0; i < n; ++i) trial[i] = u[i] + damp * step(i);
      bool sorted = true;
      for (int i = 1; i < n; ++i)
        if (!(trial[i] > trial[i - 1])) {
          sorted = false;
          break;
        }
      if (sorted) {
        gradient(trial, gt);
        if (max_norm(gt) < gn) {
          u = trial;
          g = gt;
          accepted = true;
          break;
        }
      }
      damp *= 0.5;
    }
    if (!accepted)
      throw std::runtime_error("equilibrium_positions: stalled, residual " +
                               std::to_string(gn));
  }
  throw std::runtime_error("equilibrium_positions: no convergence after " +
                           std::to_string(max_iter) + " iterations, residual " +
                           std::to_string(max_norm(g)));
}

std::vector<double> equilibrium_positions(int n_ions, const TrapParameters& trap, double tol,
                                          int max_iter) {
  double scale = trap.length_scale();
  std::vector<double> u = equilibrium_positions_dimensionless(n_ions, tol, max_iter);
  for (double& v : u) v *= scale;
  return u;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double wcss(const std::vector<std::vector<double>>& points, const std::vector<double>& weights,
            const std::vector<std::vector<double>>& centroids,
            const std::vector<int>& assignments) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    s += weights[i] * sq_dist(points[i], centroids[assignments[i]]);
  return s;
}

}  // namespace

int nearest_centroid(const std::vector<double>& point,
                     const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = sq_dist(point, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    double d = sq_dist(point, centroids[c]);
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points,
                    const std::vector<double>& weights, int k, std::uint64_t seed, int max_iter,
                    double tol) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("kmeans: empty point set");
  if (weights.size() != n) throw std::invalid_argument("kmeans: weights/points size mismatch");
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  for (const auto& p : points)
    if (p.size() != points[0].size())
      throw std::invalid_argument("kmeans: inconsistent point dimensions");
  for (double w : weights)
    if (!(w > 0)) throw std::invalid_argument("kmeans: weights must be > 0");

  {
    std::vector<std::vector<double>> uniq(points);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (static_cast<int>(uniq.size()) < k)
      throw std::invalid_argument("kmeans: k exceeds the number of distinct points");
  }

  // Greedy farthest-point seeding from a seeded uniform first pick.
  auto gen = rng::engine(seed);
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(gen)]);
  std::vector<double> nearest_d(n);
  for (std::size_t i = 0; i < n; ++i) nearest_d[i] = sq_dist(points[i], centroids[0]);
  while (static_cast<int>(centroids.size()) < k) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (nearest_d[i] > nearest_d[far]) far = i;
    centroids.push_back(points[far]);
    for (std::size_t i = 0; i < n; ++i)
      nearest_d[i] = std::min(nearest_d[i], sq_dist(points[i], centroids.back()));
  }

  const std::size_t dim = points[0].size();
  std::vector<int> assignments(n, -1);
  KMeansResult result;
  double prev_obj = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int c = nearest_centroid(points[i], centroids);
      if (c != assignments[i]) {
        assignments[i] = c;
        changed = true;
      }
    }
    // Weighted centroid update; empty clusters keep their previous position.
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<double> wsum(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[assignments[i]][d] += weights[i] * points[i][d];
      wsum[assignments[i]] += weights[i];
    }
    for (int c = 0; c < k; ++c)
      if (wsum[c] > 0)
        for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / wsum[c];

    double obj = wcss(points, weights, centroids, assignments);
    if (obj > prev_obj * (1 + 1e-9) + 1e-12)
      throw std::logic_error("kmeans: objective increased across a Lloyd iteration");
    result.objective_trace.push_back(obj);
    result.iterations = iter + 1;
    bool small_move = std::abs(prev_obj - obj) <= tol;
    prev_obj = obj;
    if (!changed || small_move) break;
  }

  // Single-point polish: move any point whose reassignment (with centroid
  // updates) lowers the weighted objective. Guarantees no improving
  // one-point move remains.
  std::vector<double> wsum(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) wsum[assignments[i]] += weights[i];
  bool improved = true;
  int guard = 0;
  while (improved && guard++ < 10000) {
    improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      int a = assignments[i];
      double w = weights[i];
      if (wsum[a] - w <= 0) continue;  // would empty the cluster
      double removal = wsum[a] * w / (wsum[a] - w) * sq_dist(points[i], centroids[a]);
      for (int c = 0; c < k; ++c) {
        if (c == a) continue;
        double insertion = wsum[c] * w / (wsum[c] + w) * sq_dist(points[i], centroids[c]);
        if (insertion < removal - 1e-12 * (1 + std::abs(removal))) {
          const std::size_t d = points[0].size();
          for (std::size_t t = 0; t < d; ++t) {
            centroids[a][t] = (centroids[a][t] * wsum[a] - w * points[i][t]) / (wsum[a] - w);
            centroids[c][t] = (centroids[c][t] * wsum[c] + w * points[i][t]) / (wsum[c] + w);
          }
          wsum[a] -= w;
          wsum[c] += w;
          assignments[i] = c;
          improved = true;
          break;
        }
      }
    }
  }

  result.centroids = std::move(centroids);
  result.assignments = std::move(assignments);
  result.objective = wcss(points, weights, result.centroids, result.assignments);
  if (result.objective_trace.empty() || result.objective < result.objective_trace.back())
    result.objective_trace.push_back(result.objective);
  return result;
}

std::pair<double, double> fit_line(const std::vector<std::array<double, 2>>& centers) {
  if (centers.size() < 2) throw std::invalid_argument("fit_line: need at least 2 points");
  double sx = 0, sy = 0;
  for (const auto& c : centers) {
    sx += c[0];
    sy += c[1];
  }
  const double n = static_cast<double>(centers.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& c : centers) {
    sxx += (c[0] - mx) * (c[0] - mx);
    sxy += (c[0] - mx) * (c[1] - my);
  }
  if (sxx == 0) throw std::invalid_argument("fit_line: all x coordinates coincide");
  double m = sxy / sxx;
  return {m, my - m * mx};
}

IonChainLayout locate_ions(const std::vector<imaging::Frame>& frames, int n_ions,
                           double background_percentile, std::uint64_t seed) {
  if (frames.empty()) throw std::invalid_argument("locate_ions: no frames");
  if (n_ions < 1) throw std::invalid_argument("locate_ions: n_ions must be >= 1");
  if (background_percentile < 0 || background_percentile >= 100)
    throw std::invalid_argument("locate_ions: percentile must be in [0, 100)");
  const int w = frames[0].width, h = frames[0].height;
  for (const auto& f : frames)
    if (f.width != w || f.height != h)
      throw std::invalid_argument("locate_ions: frames have mixed dimensions");

  std::vector<double> mean(static_cast<std::size_t>(w) * h, 0.0);
  for (const auto& f : frames)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f.pixels[i];
  for (auto& v : mean) v /= static_cast<double>(frames.size());

  std::vector<double> sorted(mean);
  std::sort(sorted.begin(), sorted.end());
  const auto idx =
      static_cast<std::size_t>(background_percentile / 100.0 * (sorted.size() - 1));
  const double threshold = sorted[idx];

  std::vector<std::vector<double>> points;
  std::vector<double> weights;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = mean[static_cast<std::size_t>(y) * w + x];
      if (v > threshold) {
        points.push_back({static_cast<double>(x), static_cast<double>(y)});
        weights.push_back(v);
      }
    }
  if (points.empty()) throw std::runtime_error("locate_ions: no signal pixels above background");
  if (static_cast<int>(points.size()) < n_ions)
    throw std::runtime_error("locate_ions: fewer signal pixels (" +
                             std::to_string(points.size()) + ") than ions (" +
                             std::to_string(n_ions) + ")");

  KMeansResult km = kmeans(points, weights, n_ions, seed);
  std::vector<std::array<double, 2>> centers;
  for (const auto& c : km.centroids) centers.push_back({c[0], c[1]});
  std::sort(centers.begin(), centers.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  for (std::size_t i = 1; i < centers.size(); ++i)
    if (!(centers[i][0] > centers[i - 1][0]))
      throw std::runtime_error("locate_ions: degenerate cluster centers (coincident x)");

  IonChainLayout layout;
  layout.centers = std::move(centers);
  if (layout.centers.size() >= 2) {
    auto [m, b] = fit_line(layout.centers);
    layout.slope = m;
    layout.intercept = b;
  } else {
    layout.slope = 0.0;
    layout.intercept = layout.centers[0][1];
  }
  return layout;
}

std::vector<AnchorBox> anchor_boxes(const IonChainLayout& layout, int box_width, int box_height,
                                    int frame_width, int frame_height) {
  if (layout.centers.empty()) throw std::invalid_argument("anchor_boxes: empty layout");
  if (box_width < 1 || box_height < 1)
    throw std::invalid_argument("anchor_boxes: box dimensions must be >= 1");
  std::vector<AnchorBox> boxes;
  boxes.reserve(layout.centers.size());
  for (const auto& c : layout.centers) {
    AnchorBox box;
    box.center_x = c[0];
    box.center_y = layout.slope * c[0] + layout.intercept;  // snap y to the fitted line
    int cx = static_cast<int>(std::lround(box.center_x));
    int cy = static_cast<int>(std::lround(box.center_y));
    int x0 = cx - box_width / 2;
    int y0 = cy - box_height / 2;
    int x1 = x0 + box_width - 1;
    int y1 = y0 + box_height - 1;
    x0 = std::clamp(x0, 0, frame_width - 1);
    y0 = std::clamp(y0, 0, frame_height - 1);
    x1 = std::clamp(x1, 0, frame_width - 1);
    y1 = std::clamp(y1, 0, frame_height - 1);
    box.x0 = x0;
    box.y0 = y0;
    box.width = x1 - x0 + 1;
    box.height = y1 - y0 + 1;
    boxes.push_back(box);
  }
  return boxes;
}

void save_layout(const IonChainLayout& layout, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["centers"] = nlohmann::json::array();
  for (const auto& c : layout.centers) doc["centers"].push_back({c[0], c[1]});
  doc["m"] = layout.slope;
  doc["b"] = layout.intercept;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("layout: cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

IonChainLayout load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("layout: cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("layout: parse error in '" + path.string() + "': " + e.what());
  }
  IonChainLayout layout;
  for (const auto& c : doc.at("centers"))
    layout.centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  layout.slope = doc.at("m").get<double>();
  layout.intercept = doc.at("b").get<double>();
  for (std::size_t i = 1; i < layout.centers.size(); ++i)
    if (!(layout.centers[i][0] > layout.centers[i - 1][0]))
      throw std::runtime_error("layout: centers must be strictly increasing in x");
  return layout;
}

}  // namespace ionread::localization
