#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "fclg/graph.hpp"

namespace fclg {

/// Assignment of graphs to K client shards, optionally with a server shard,
/// plus the class skew bookkeeping.
struct Partition {
  std::vector<std::vector<int>> client_shards;
  std::vector<int> server_shard;          // empty unless carved out
  std::vector<Vector> class_histograms;   // q_i, one per client, each sums to 1
  Vector population;                      // p over the client-held graphs
  double emd = 0.0;
  int num_classes = 0;

  int num_clients() const { return static_cast<int>(client_shards.size()); }
};

/// Per-class round-robin split after an in-class shuffle; EMD lands near 0.
/// `server_fraction` > 0 first carves out a population-matching server shard.
Partition partition_iid(const GraphSet& set, int num_clients, std::mt19937_64& rng,
                        double server_fraction = 0.0);

/// Dominant-label rotation: client i's dominant class is i mod C and receives
/// a `dominant_fraction` share of the client quota; the remainder is spread
/// evenly over the other classes. When a class pool runs dry the deficit
/// spills to the next class in cyclic order, deterministically.
Partition partition_noniid(const GraphSet& set, int num_clients, double dominant_fraction,
                           std::mt19937_64& rng, double server_fraction = 0.0);

/// sum_i (|S_i| / |S|) * ||q_i - p||_1 over client shards (server excluded);
/// empty shards carry zero weight.
double compute_emd(const Partition& partition);

/// Bisection over dominant_fraction until |emd - target| <= tolerance
/// (at most 50 iterations). Throws if the target lies outside the achievable
/// range, reporting that range.
std::pair<double, Partition> calibrate_dominant_fraction(const GraphSet& set, int num_clients,
                                                         double target_emd, double tolerance,
                                                         std::mt19937_64& rng);

/// Plain-text manifest (client id -> graph ids) for reproducibility.
void save_manifest(const std::filesystem::path& path, const Partition& partition);
Partition load_manifest(const std::filesystem::path& path, const GraphSet& set);

}  // namespace fclg
