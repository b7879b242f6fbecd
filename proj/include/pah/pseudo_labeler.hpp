#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pah/tensor.hpp"

namespace pah {

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  double inertia = 0.0;  // sum of squared distances to the assigned centroid
  /// Inertia of each assignment step, measured against the centroids that
  /// produced it. Non-increasing for Lloyd iterations.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

inline constexpr std::size_t kKMeansMaxIterations = 100;

/// Lloyd's algorithm from k-means++ seeding. Stops at an assignment fixpoint
/// or after `max_iterations`. An empty cluster takes over the point farthest
/// from its centroid among clusters with more than one member.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iterations = kKMeansMaxIterations);

struct ForegroundSplit {
  std::vector<std::uint8_t> mask;  // [h*w], 1 = foreground
  std::vector<double> activation;  // normalized norms in [0,1]
};

/// Splits pixels of a dense map [h,w,Cd] by 2-means on their L2 norm divided
/// by the largest norm; the cluster with the higher mean is foreground.
ForegroundSplit foreground_split(const Tensor& dense, std::uint64_t seed);

struct PseudoLabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_parts = 0;            // K, background included
  std::vector<std::uint8_t> labels;     // [h*w], 0 = background, 1..K-1 top to bottom
  std::size_t epoch_generated = 0;
  bool fallback = false;                // too few distinct foreground features

  Tensor one_hot() const;  // [h,w,K]
  /// Mirrors the label map left-right (for horizontally flipped inputs).
  PseudoLabelMap flipped() const;
};

/// Two-stage clustering: foreground split, then k-means with K-1 clusters on
/// unit-normalized foreground features. Clusters are numbered 1..K-1 by
/// ascending mean row; equal mean rows order by smaller centroid norm.
PseudoLabelMap generate_pseudo_labels(const Tensor& dense, std::size_t num_parts,
                                      std::uint64_t seed, std::size_t epoch = 0);

/// Pseudo-labels are regenerated at every epoch, starting with epoch 0.
bool refresh_policy(long long epoch);

}  // namespace pah
