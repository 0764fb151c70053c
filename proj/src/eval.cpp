#include "fclg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "fclg/rng.hpp"

namespace fclg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double squared_distance(const Matrix& points, long i, const Matrix& centroids, long c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

// One k-means++ seeded Lloyd run.
ClusteringResult lloyd_once(const Matrix& points, int k, std::mt19937_64& rng,
                            std::vector<double>* inertia_trace = nullptr) {
  const long n = points.rows();
  ClusteringResult result;
  result.centroids.resize(k, points.cols());

  // k-means++ seeding: first centroid uniform, then D^2 sampling.
  std::uniform_int_distribution<long> uniform_point(0, n - 1);
  std::vector<long> chosen;
  chosen.push_back(uniform_point(rng));
  result.centroids.row(0) = points.row(chosen[0]);
  Vector d2 = Vector::Constant(n, kInf);
  for (int c = 1; c < k; ++c) {
    for (long i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), squared_distance(points, i, result.centroids, c - 1));
    }
    const double total = d2.sum();
    long pick = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (long i = 0; i < n; ++i) {
        r -= d2(i);
        if (r <= 0.0) { pick = i; break; }
      }
      if (pick < 0) pick = n - 1;
    } else {
      // All remaining mass is zero (duplicate points); take the first
      // point not already chosen to stay deterministic.
      pick = 0;
      for (long i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) { pick = i; break; }
      }
    }
    chosen.push_back(pick);
    result.centroids.row(c) = points.row(pick);
  }

  result.assignments.assign(n, 0);
  double prev_inertia = kInf;
  for (int iter = 0; iter < 300; ++iter) {
    // Assignment step; ties go to the lowest cluster index.
    double inertia = 0.0;
    std::vector<long> count(k, 0);
    for (long i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points, i, result.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(points, i, result.centroids, c);
        if (d < best_d) { best_d = d; best = c; }
      }
      result.assignments[i] = best;
      ++count[best];
      inertia += best_d;
    }
    if (inertia_trace != nullptr) inertia_trace->push_back(inertia);

    // Reseed empty clusters to the point farthest from its assigned centroid.
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      long far_i = -1;
      double far_d = -1.0;
      for (long i = 0; i < n; ++i) {
        const double d = squared_distance(points, i, result.centroids, result.assignments[i]);
        if (d > far_d) { far_d = d; far_i = i; }
      }
      result.centroids.row(c) = points.row(far_i);
      if (count[result.assignments[far_i]] > 1) {
        --count[result.assignments[far_i]];
        result.assignments[far_i] = c;
        ++count[c];
      }
      reseeded = true;
    }
    if (reseeded) {
      // Recompute assignments against the patched centroids next loop.
      prev_inertia = kInf;
    }

    // Update step.
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<long> sizes(k, 0);
    for (long i = 0; i < n; ++i) {
      sums.row(result.assignments[i]) += points.row(i);
      ++sizes[result.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[c] > 0) result.centroids.row(c) = sums.row(c) / static_cast<double>(sizes[c]);
    }

    if (std::isfinite(prev_inertia)) {
      if (prev_inertia == 0.0) break;
      if (std::abs(prev_inertia - inertia) / prev_inertia < 1e-4) break;
    }
    prev_inertia = inertia;
  }

  // Final assignment and inertia under the last centroids.
  result.inertia = 0.0;
  for (long i = 0; i < n; ++i) {
    int best = 0;
    double best_d = squared_distance(points, i, result.centroids, 0);
    for (int c = 1; c < k; ++c) {
      const double d = squared_distance(points, i, result.centroids, c);
      if (d < best_d) { best_d = d; best = c; }
    }
    result.assignments[i] = best;
    result.inertia += best_d;
  }
  return result;
}

// Minimum-cost perfect assignment on a square matrix (potentials method).
// Returns row -> column.
std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
        if (minv[j] < delta) { delta = minv[j]; j1 = j; }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

ClusteringResult kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed,
                        std::vector<double>* inertia_trace) {
  const long n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (n < k) throw std::invalid_argument("kmeans: need at least k points");
  if (restarts < 1) throw std::invalid_argument("kmeans: need at least one restart");

  ClusteringResult best;
  best.inertia = kInf;
  for (int r = 0; r < restarts; ++r) {
    auto rng = make_rng(seed, 0x6b6d, r);
    ClusteringResult candidate =
        lloyd_once(points, k, rng, restarts == 1 ? inertia_trace : nullptr);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

std::vector<int> optimal_cluster_mapping(const std::vector<std::vector<long>>& contingency) {
  const int k = static_cast<int>(contingency.size());
  if (k == 0) return {};
  const int c = static_cast<int>(contingency[0].size());
  const int n = std::max(k, c);
  // Maximize matches == minimize negated counts on a zero-padded square.
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < c; ++j) cost[i][j] = -static_cast<double>(contingency[i][j]);
  std::vector<int> row_to_col = hungarian_min_cost(cost);
  std::vector<int> mapping(k, -1);
  for (int i = 0; i < k; ++i) {
    if (row_to_col[i] < c) mapping[i] = row_to_col[i];
  }
  return mapping;
}

double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels,
                           int k, int num_classes, ClusteringResult* result) {
  if (assignments.size() != labels.size()) {
    throw std::invalid_argument("clustering_accuracy: length mismatch");
  }
  if (assignments.empty()) return 0.0;
  std::vector<std::vector<long>> contingency(k, std::vector<long>(num_classes, 0));
  for (size_t i = 0; i < assignments.size(); ++i) {
    ++contingency[assignments[i]][labels[i]];
  }
  const std::vector<int> mapping = optimal_cluster_mapping(contingency);
  long matched = 0;
  for (int i = 0; i < k; ++i) {
    if (mapping[i] >= 0) matched += contingency[i][mapping[i]];
  }
  if (result != nullptr) result->cluster_to_class = mapping;
  return static_cast<double>(matched) / static_cast<double>(assignments.size());
}

double macro_f1(const std::vector<int>& assignments, const std::vector<int>& cluster_to_class,
                const std::vector<int>& labels, int num_classes) {
  if (assignments.size() != labels.size()) {
    throw std::invalid_argument("macro_f1: length mismatch");
  }
  std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (size_t i = 0; i < assignments.size(); ++i) {
    const int pred = cluster_to_class.at(assignments[i]);
    const int truth = labels[i];
    if (pred == truth) {
      ++tp[truth];
    } else {
      if (pred >= 0) ++fp[pred];
      ++fn[truth];
    }
  }
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const double denom_p = static_cast<double>(tp[c] + fp[c]);
    const double denom_r = static_cast<double>(tp[c] + fn[c]);
    const double precision = denom_p > 0 ? tp[c] / denom_p : 0.0;
    const double recall = denom_r > 0 ? tp[c] / denom_r : 0.0;
    sum += (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / static_cast<double>(num_classes);
}

void export_embeddings(const Matrix& embeddings, const std::vector<int>& labels,
                       const std::filesystem::path& path) {
  if (static_cast<size_t>(embeddings.rows()) != labels.size()) {
    throw std::invalid_argument("export_embeddings: row/label count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_embeddings: cannot open " + path.string());
  out.precision(17);
  if (embeddings.rows() == 0) {
    out << "# label, embedding\n";
    return;
  }
  for (long i = 0; i < embeddings.rows(); ++i) {
    out << labels[i];
    for (long j = 0; j < embeddings.cols(); ++j) out << ',' << embeddings(i, j);
    out << '\n';
  }
  if (!out) throw std::runtime_error("export_embeddings: write failed for " + path.string());
}

}  // namespace fclg
