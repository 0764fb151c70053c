#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fclg/graph.hpp"

namespace fclg {

struct ClusteringResult {
  std::vector<int> assignments;       // per point, in [0, k)
  Matrix centroids;                   // k x D
  double inertia = 0.0;
  std::vector<int> cluster_to_class;  // optimal matching, filled by clustering_accuracy
};

/// Lloyd's algorithm with k-means++ seeding; up to 300 iterations or
/// relative inertia change < 1e-4; best of `restarts` by inertia (ties by
/// restart index). Empty clusters are reseeded to the farthest point.
/// When `inertia_trace` is non-null and restarts == 1, the per-iteration
/// inertia sequence is recorded.
ClusteringResult kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed,
                        std::vector<double>* inertia_trace = nullptr);

/// Maximum-weight cluster -> class assignment on a k x C count matrix
/// (Hungarian method). Returns per-cluster class ids; unmatched clusters
/// (k > C) get -1.
std::vector<int> optimal_cluster_mapping(const std::vector<std::vector<long>>& contingency);

/// Hungarian-matched accuracy: matched count / N. If `result` is given its
/// cluster_to_class map is filled.
double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels,
                           int k, int num_classes, ClusteringResult* result = nullptr);

/// Macro-F1 of the predictions mapped through `cluster_to_class` (the same
/// map accuracy used). Classes with no predictions and no truth count as 0.
double macro_f1(const std::vector<int>& assignments, const std::vector<int>& cluster_to_class,
                const std::vector<int>& labels, int num_classes);

/// One row per graph: label, then the embedding, comma-separated. An empty
/// matrix produces a single header line.
void export_embeddings(const Matrix& embeddings, const std::vector<int>& labels,
                       const std::filesystem::path& path);

}  // namespace fclg
