#include "pah/pseudo_labeler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "pah/errors.hpp"

namespace pah {

namespace {

using Point = std::vector<double>;

double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<Point> seed_plus_plus(const std::vector<Point>& points, std::size_t k,
                                  std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<Point> centroids;
  centroids.push_back(points[pick(rng)]);
  std::vector<double> best(n);
  for (std::size_t i = 0; i < n; ++i) best[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    const double total = std::accumulate(best.begin(), best.end(), 0.0);
    std::size_t next = 0;
    if (total <= 0.0) {
      next = pick(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      const double r = u(rng);
      double cum = 0.0;
      next = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += best[i];
        if (best[i] > 0.0 && r <= cum) {
          next = i;
          break;
        }
      }
    }
    centroids.push_back(points[next]);
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

// Nearest centroid per point (lowest index on ties); returns the inertia.
double assign_nearest(const std::vector<Point>& points, const std::vector<Point>& centroids,
                      std::vector<std::size_t>& assignment, std::vector<double>& dist) {
  assignment.resize(points.size());
  dist.resize(points.size());
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = squared_distance(points[i], centroids[c]);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    assignment[i] = arg;
    dist[i] = best;
    inertia += best;
  }
  return inertia;
}

void repair_empty_clusters(std::size_t k, std::vector<std::size_t>& assignment,
                           std::vector<double>& dist) {
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assignment) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t victim = assignment.size();
    double far = -1.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (counts[assignment[i]] > 1 && dist[i] > far) {
        far = dist[i];
        victim = i;
      }
    }
    if (victim == assignment.size()) break;  // cannot happen while |points| >= k
    --counts[assignment[victim]];
    assignment[victim] = c;
    counts[c] = 1;
    dist[victim] = 0.0;
  }
}

std::vector<Point> cluster_means(const std::vector<Point>& points,
                                 const std::vector<std::size_t>& assignment, std::size_t k) {
  const std::size_t d = points[0].size();
  std::vector<Point> means(k, Point(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++counts[assignment[i]];
    for (std::size_t j = 0; j < d; ++j) means[assignment[i]][j] += points[i][j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (double& v : means[c]) v /= static_cast<double>(counts[c]);
  }
  return means;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iterations) {
  if (k == 0) throw ContractError("kmeans: k must be >= 1");
  if (points.size() < k) {
    throw InsufficientPointsError("kmeans: " + std::to_string(points.size()) +
                                  " points for k=" + std::to_string(k));
  }
  const std::size_t d = points[0].size();
  for (const auto& p : points) {
    if (p.size() != d) throw DimensionError("kmeans: points differ in dimension");
  }

  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centroids = seed_plus_plus(points, k, rng);
  std::vector<std::size_t> assignment, previous;
  std::vector<double> dist;
  bool converged = false;
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    const double inertia = assign_nearest(points, result.centroids, assignment, dist);
    result.inertia_history.push_back(inertia);
    if (assignment == previous) {
      converged = true;
      break;
    }
    repair_empty_clusters(k, assignment, dist);
    result.centroids = cluster_means(points, assignment, k);
    previous = assignment;
    ++result.iterations;
  }
  if (!converged) {
    result.inertia_history.push_back(assign_nearest(points, result.centroids, assignment, dist));
  }
  result.assignment = std::move(assignment);
  result.inertia = result.inertia_history.back();
  return result;
}

ForegroundSplit foreground_split(const Tensor& dense, std::uint64_t seed) {
  if (dense.rank() != 3) throw DimensionError("foreground_split: expected [h,w,Cd] map");
  const std::size_t n = dense.dim(0) * dense.dim(1);
  const std::size_t cd = dense.dim(2);
  auto v = dense.data();
  ForegroundSplit out;
  out.activation.resize(n);
  double largest = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < cd; ++c) s += v[p * cd + c] * v[p * cd + c];
    out.activation[p] = std::sqrt(s);
    largest = std::max(largest, out.activation[p]);
  }
  if (!(largest > 0.0)) throw DegenerateFeaturesError("foreground_split: all-zero feature map");
  for (double& a : out.activation) a /= largest;

  std::vector<Point> scalars(n);
  for (std::size_t p = 0; p < n; ++p) scalars[p] = {out.activation[p]};
  KMeansResult km = kmeans(scalars, 2, seed);
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (std::size_t p = 0; p < n; ++p) {
    sum[km.assignment[p]] += out.activation[p];
    ++count[km.assignment[p]];
  }
  // A cluster can only be empty here if Lloyd hit the iteration cap.
  const double lowest = -std::numeric_limits<double>::infinity();
  const double mean0 = count[0] ? sum[0] / static_cast<double>(count[0]) : lowest;
  const double mean1 = count[1] ? sum[1] / static_cast<double>(count[1]) : lowest;
  out.mask.assign(n, 0);
  if (mean0 == mean1) {
    std::fill(out.mask.begin(), out.mask.end(), 1);  // no contrast: everything is foreground
    return out;
  }
  const std::size_t fg = mean1 > mean0 ? 1 : 0;
  for (std::size_t p = 0; p < n; ++p) out.mask[p] = km.assignment[p] == fg ? 1 : 0;
  return out;
}

Tensor PseudoLabelMap::one_hot() const {
  Tensor t({height, width, num_parts});
  auto d = t.mutable_data();
  for (std::size_t p = 0; p < labels.size(); ++p) d[p * num_parts + labels[p]] = 1.0;
  return t;
}

PseudoLabelMap PseudoLabelMap::flipped() const {
  PseudoLabelMap out = *this;
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      out.labels[i * width + j] = labels[i * width + (width - 1 - j)];
  return out;
}

PseudoLabelMap generate_pseudo_labels(const Tensor& dense, std::size_t num_parts,
                                      std::uint64_t seed, std::size_t epoch) {
  if (num_parts < 2) throw ContractError("generate_pseudo_labels: K must be >= 2");
  if (num_parts > 256) throw ContractError("generate_pseudo_labels: K must fit in a byte");
  ForegroundSplit split = foreground_split(dense, seed);
  const std::size_t h = dense.dim(0), w = dense.dim(1), cd = dense.dim(2);
  auto v = dense.data();

  PseudoLabelMap out;
  out.height = h;
  out.width = w;
  out.num_parts = num_parts;
  out.epoch_generated = epoch;
  out.labels.assign(h * w, 0);

  std::vector<std::size_t> fg_pixels;
  std::vector<Point> unit;
  for (std::size_t p = 0; p < h * w; ++p) {
    if (!split.mask[p]) continue;
    double norm = 0.0;
    for (std::size_t c = 0; c < cd; ++c) norm += v[p * cd + c] * v[p * cd + c];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    Point u(cd);
    for (std::size_t c = 0; c < cd; ++c) u[c] = v[p * cd + c] / norm;
    fg_pixels.push_back(p);
    unit.push_back(std::move(u));
  }

  const std::size_t parts = num_parts - 1;
  const std::set<Point> distinct(unit.begin(), unit.end());
  if (distinct.size() < parts) {
    out.fallback = true;
    for (std::size_t p : fg_pixels) out.labels[p] = 1;
    return out;
  }

  KMeansResult km = kmeans(unit, parts, seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<double> row_sum(parts, 0.0);
  std::vector<std::size_t> count(parts, 0);
  for (std::size_t i = 0; i < fg_pixels.size(); ++i) {
    row_sum[km.assignment[i]] += static_cast<double>(fg_pixels[i] / w);
    ++count[km.assignment[i]];
  }
  std::vector<double> mean_row(parts), centroid_norm(parts);
  for (std::size_t c = 0; c < parts; ++c) {
    mean_row[c] = count[c] ? row_sum[c] / static_cast<double>(count[c])
                           : std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (double x : km.centroids[c]) s += x * x;
    centroid_norm[c] = std::sqrt(s);
  }
  std::vector<std::size_t> order(parts);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mean_row[a] != mean_row[b]) return mean_row[a] < mean_row[b];
    return centroid_norm[a] < centroid_norm[b];
  });
  std::vector<std::uint8_t> label_of(parts);
  for (std::size_t rank = 0; rank < parts; ++rank) {
    label_of[order[rank]] = static_cast<std::uint8_t>(rank + 1);
  }
  for (std::size_t i = 0; i < fg_pixels.size(); ++i) {
    out.labels[fg_pixels[i]] = label_of[km.assignment[i]];
  }
  return out;
}

bool refresh_policy(long long epoch) {
  if (epoch < 0) throw ContractError("refresh_policy: epoch must be >= 0");
  return true;
}

}  // namespace pah
