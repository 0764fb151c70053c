#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fclg/eval.hpp"
#include "fclg/rng.hpp"
#include "test_support.hpp"

using namespace fclg;

namespace {

// Exhaustive search over cluster -> class injections; the independent
// oracle for the Hungarian route.
long brute_force_best_match(const std::vector<std::vector<long>>& contingency) {
  const int k = static_cast<int>(contingency.size());
  const int c = static_cast<int>(contingency[0].size());
  std::vector<int> classes(c);
  std::iota(classes.begin(), classes.end(), 0);
  long best = 0;
  // Permute class slots over max(k, c) positions; clusters beyond c unmatched.
  std::vector<int> slots(std::max(k, c));
  std::iota(slots.begin(), slots.end(), 0);
  do {
    long matched = 0;
    for (int i = 0; i < k; ++i) {
      if (slots[i] < c) matched += contingency[i][slots[i]];
    }
    best = std::max(best, matched);
  } while (std::next_permutation(slots.begin(), slots.end()));
  return best;
}

}  // namespace

TEST_CASE("two well-separated blobs cluster perfectly") {
  auto rng = make_rng(1);
  std::normal_distribution<double> noise(0.0, 0.1);
  const int per_blob = 20;
  Matrix points(2 * per_blob, 2);
  for (int i = 0; i < per_blob; ++i) {
    points(i, 0) = 0.0 + noise(rng);
    points(i, 1) = 0.0 + noise(rng);
    points(per_blob + i, 0) = 10.0 + noise(rng);
    points(per_blob + i, 1) = 10.0 + noise(rng);
  }
  const ClusteringResult result = kmeans(points, 2, 5, 7);

  // perfect separation
  for (int i = 1; i < per_blob; ++i) {
    CHECK(result.assignments[i] == result.assignments[0]);
    CHECK(result.assignments[per_blob + i] == result.assignments[per_blob]);
  }
  CHECK(result.assignments[0] != result.assignments[per_blob]);

  // inertia equals the within-blob sum around the blob means
  double expected = 0.0;
  for (int blob = 0; blob < 2; ++blob) {
    const Matrix block = points.middleRows(blob * per_blob, per_blob);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    expected += (block.rowwise() - mean).squaredNorm();
  }
  CHECK(result.inertia == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("k = 1 returns the mean, k = N zero inertia") {
  auto rng = make_rng(2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix points(12, 3);
  for (long i = 0; i < points.size(); ++i) points.data()[i] = gauss(rng);

  const ClusteringResult one = kmeans(points, 1, 3, 11);
  const Eigen::RowVectorXd mean = points.colwise().mean();
  CHECK((one.centroids.row(0) - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(one.inertia == doctest::Approx((points.rowwise() - mean).squaredNorm()).epsilon(1e-12));

  const ClusteringResult all = kmeans(points, 12, 3, 11);
  CHECK(all.inertia == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identical points with k > 1 still return clusters") {
  Matrix points = Matrix::Ones(6, 2);
  const ClusteringResult result = kmeans(points, 3, 2, 5);
  CHECK(result.assignments.size() == 6);
  CHECK(result.inertia == doctest::Approx(0.0));
  for (int a : result.assignments) {
    CHECK(a >= 0);
    CHECK(a < 3);
  }
}

TEST_CASE("inertia is non-increasing across Lloyd iterations") {
  auto rng = make_rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix points(60, 4);
    for (long i = 0; i < points.size(); ++i) points.data()[i] = gauss(rng);
    std::vector<double> trace;
    kmeans(points, 4, 1, 100 + trial, &trace);
    REQUIRE(trace.size() >= 1);
    for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
  }
}

TEST_CASE("kmeans is deterministic per seed") {
  auto rng = make_rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix points(40, 3);
  for (long i = 0; i < points.size(); ++i) points.data()[i] = gauss(rng);
  const ClusteringResult a = kmeans(points, 3, 10, 42);
  const ClusteringResult b = kmeans(points, 3, 10, 42);
  CHECK(a.assignments == b.assignments);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("perfect and permuted assignments score accuracy 1") {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  CHECK(clustering_accuracy(labels, labels, 3, 3) == doctest::Approx(1.0));
  const std::vector<int> permuted{2, 2, 0, 0, 1, 1};
  CHECK(clustering_accuracy(permuted, labels, 3, 3) == doctest::Approx(1.0));
}

TEST_CASE("the [[5,1],[2,4]] contingency yields 0.75 and macro-F1 107/143") {
  // assignments: cluster 0 holds 5 of class 0 + 1 of class 1, cluster 1
  // holds 2 of class 0 + 4 of class 1.
  std::vector<int> assignments, labels;
  auto add = [&](int cluster, int label, int count) {
    for (int i = 0; i < count; ++i) {
      assignments.push_back(cluster);
      labels.push_back(label);
    }
  };
  add(0, 0, 5);
  add(0, 1, 1);
  add(1, 0, 2);
  add(1, 1, 4);

  ClusteringResult result;
  const double acc = clustering_accuracy(assignments, labels, 2, 2, &result);
  CHECK(acc == doctest::Approx(0.75).epsilon(1e-12));
  REQUIRE(result.cluster_to_class.size() == 2);
  CHECK(result.cluster_to_class[0] == 0);
  CHECK(result.cluster_to_class[1] == 1);

  // class 0: P = 5/6, R = 5/7; class 1: P = 2/3, R = 4/5
  // macro = (10/13 + 8/11) / 2 = 107/143
  const double f1 = macro_f1(assignments, result.cluster_to_class, labels, 2);
  CHECK(f1 == doctest::Approx(107.0 / 143.0).epsilon(1e-12));
}

TEST_CASE("all predictions in one class on balanced labels gives macro-F1 1/3") {
  std::vector<int> assignments(10, 0);
  std::vector<int> labels;
  for (int i = 0; i < 5; ++i) labels.push_back(0);
  for (int i = 0; i < 5; ++i) labels.push_back(1);
  ClusteringResult result;
  clustering_accuracy(assignments, labels, 2, 2, &result);
  CHECK(macro_f1(assignments, result.cluster_to_class, labels, 2) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("Hungarian equals brute force on random contingency tables") {
  auto rng = make_rng(5);
  std::uniform_int_distribution<int> dims(2, 6);
  std::uniform_int_distribution<long> counts(0, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = dims(rng);
    const int k = c;  // square case per the evaluation protocol
    std::vector<std::vector<long>> contingency(k, std::vector<long>(c));
    for (auto& row : contingency)
      for (auto& cell : row) cell = counts(rng);

    const std::vector<int> mapping = optimal_cluster_mapping(contingency);
    long matched = 0;
    for (int i = 0; i < k; ++i)
      if (mapping[i] >= 0) matched += contingency[i][mapping[i]];
    CHECK(matched == brute_force_best_match(contingency));
  }
}

TEST_CASE("accuracy is invariant under relabeling of cluster ids") {
  auto rng = make_rng(6);
  std::uniform_int_distribution<int> coin(0, 2);
  std::vector<int> assignments(60), labels(60);
  for (int i = 0; i < 60; ++i) {
    assignments[i] = coin(rng);
    labels[i] = coin(rng);
  }
  const double base = clustering_accuracy(assignments, labels, 3, 3);
  std::vector<int> relabeled(60);
  const int perm[3] = {2, 0, 1};
  for (int i = 0; i < 60; ++i) relabeled[i] = perm[assignments[i]];
  CHECK(clustering_accuracy(relabeled, labels, 3, 3) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("matched accuracy on balanced labels never drops below 1/C") {
  auto rng = make_rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + trial % 4;
    const int per_class = 12;
    std::vector<int> labels;
    for (int cls = 0; cls < c; ++cls)
      for (int i = 0; i < per_class; ++i) labels.push_back(cls);
    std::uniform_int_distribution<int> any(0, c - 1);
    std::vector<int> assignments(labels.size());
    for (auto& a : assignments) a = any(rng);
    CHECK(clustering_accuracy(assignments, labels, c, c) >= 1.0 / c - 1e-12);
  }
}

TEST_CASE("embedding export writes one row per graph and round-trips") {
  fclg::test::TempDir tmp("export");
  Matrix u(2, 2);
  u << 1.25, -0.5, 3.0, 0.00390625;
  const std::vector<int> labels{1, 0};
  const auto path = tmp.path / "embeddings.csv";
  export_embeddings(u, labels, path);

  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 2);

  for (int i = 0; i < 2; ++i) {
    std::stringstream ss(lines[i]);
    std::string item;
    std::getline(ss, item, ',');
    CHECK(std::stoi(item) == labels[i]);
    for (int j = 0; j < 2; ++j) {
      std::getline(ss, item, ',');
      CHECK(std::stod(item) == doctest::Approx(u(i, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("empty export produces a single header line") {
  fclg::test::TempDir tmp("export");
  const auto path = tmp.path / "empty.csv";
  export_embeddings(Matrix(0, 4), {}, path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].front() == '#');
}
