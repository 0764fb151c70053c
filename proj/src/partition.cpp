#include "fclg/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fclg/rng.hpp"

namespace fclg {

namespace {

std::vector<std::vector<int>> pools_by_class(const GraphSet& set, const std::vector<int>& ids) {
  std::vector<std::vector<int>> pools(set.num_classes);
  for (int id : ids) pools[set.graphs[id].label].push_back(id);
  return pools;
}

void fill_histograms(const GraphSet& set, Partition& partition) {
  const int c = set.num_classes;
  partition.num_classes = c;
  partition.class_histograms.assign(partition.client_shards.size(), Vector::Zero(c));
  partition.population = Vector::Zero(c);
  long total = 0;
  for (size_t i = 0; i < partition.client_shards.size(); ++i) {
    for (int id : partition.client_shards[i]) {
      partition.class_histograms[i](set.graphs[id].label) += 1.0;
      partition.population(set.graphs[id].label) += 1.0;
    }
    total += static_cast<long>(partition.client_shards[i].size());
    if (!partition.client_shards[i].empty()) {
      partition.class_histograms[i] /= static_cast<double>(partition.client_shards[i].size());
    }
  }
  if (total > 0) partition.population /= static_cast<double>(total);
  partition.emd = compute_emd(partition);
}

// Population-matching server shard: per class, a server_fraction share
// (rounded) of that class, drawn after an in-class shuffle.
std::vector<int> carve_server_shard(const GraphSet& set, double server_fraction,
                                    std::mt19937_64& rng, std::vector<int>& remaining) {
  std::vector<int> all(set.size());
  std::iota(all.begin(), all.end(), 0);
  if (server_fraction <= 0.0) {
    remaining = std::move(all);
    return {};
  }
  if (server_fraction >= 1.0) {
    throw std::invalid_argument("server fraction must lie in [0, 1)");
  }
  auto pools = pools_by_class(set, all);
  std::vector<int> server;
  remaining.clear();
  for (auto& pool : pools) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto take = static_cast<size_t>(
        std::llround(server_fraction * static_cast<double>(pool.size())));
    server.insert(server.end(), pool.begin(), pool.begin() + take);
    remaining.insert(remaining.end(), pool.begin() + take, pool.end());
  }
  std::sort(server.begin(), server.end());
  std::sort(remaining.begin(), remaining.end());
  return server;
}

}  // namespace

double compute_emd(const Partition& partition) {
  long total = 0;
  for (const auto& shard : partition.client_shards) total += static_cast<long>(shard.size());
  if (total == 0) return 0.0;
  double emd = 0.0;
  for (size_t i = 0; i < partition.client_shards.size(); ++i) {
    if (partition.client_shards[i].empty()) continue;  // zero weight
    const double weight =
        static_cast<double>(partition.client_shards[i].size()) / static_cast<double>(total);
    emd += weight * (partition.class_histograms[i] - partition.population).lpNorm<1>();
  }
  return emd;
}

Partition partition_iid(const GraphSet& set, int num_clients, std::mt19937_64& rng,
                        double server_fraction) {
  if (num_clients < 1) throw std::invalid_argument("partition_iid: need at least one client");
  if (num_clients > set.size()) {
    throw std::invalid_argument("partition_iid: more clients than graphs");
  }
  Partition partition;
  partition.client_shards.assign(num_clients, {});
  std::vector<int> remaining;
  partition.server_shard = carve_server_shard(set, server_fraction, rng, remaining);

  auto pools = pools_by_class(set, remaining);
  for (int c = 0; c < set.num_classes; ++c) {
    auto& pool = pools[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    // Offset the deal start per class so remainders spread over clients.
    for (size_t i = 0; i < pool.size(); ++i) {
      partition.client_shards[(i + c) % num_clients].push_back(pool[i]);
    }
  }
  for (auto& shard : partition.client_shards) std::sort(shard.begin(), shard.end());
  fill_histograms(set, partition);
  return partition;
}

Partition partition_noniid(const GraphSet& set, int num_clients, double dominant_fraction,
                           std::mt19937_64& rng, double server_fraction) {
  if (num_clients < 1) throw std::invalid_argument("partition_noniid: need at least one client");
  if (!(dominant_fraction > 0.0 && dominant_fraction <= 1.0)) {
    throw std::invalid_argument("partition_noniid: dominant_fraction must lie in (0, 1]");
  }
  if (num_clients > set.size()) {
    throw std::invalid_argument("partition_noniid: more clients than graphs");
  }
  const int c = set.num_classes;
  Partition partition;
  partition.client_shards.assign(num_clients, {});
  std::vector<int> remaining;
  partition.server_shard = carve_server_shard(set, server_fraction, rng, remaining);

  auto pools = pools_by_class(set, remaining);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

  const long n = static_cast<long>(remaining.size());
  // Quotas as equal as divisibility allows.
  std::vector<long> quota(num_clients, n / num_clients);
  for (long i = 0; i < n % num_clients; ++i) ++quota[i];

  for (int i = 0; i < num_clients; ++i) {
    const int dominant = i % c;
    std::vector<long> want(c, 0);
    want[dominant] = std::llround(dominant_fraction * static_cast<double>(quota[i]));
    if (want[dominant] > quota[i]) want[dominant] = quota[i];
    long rest = quota[i] - want[dominant];
    if (c > 1) {
      const long base = rest / (c - 1);
      long extra = rest % (c - 1);
      for (int off = 1; off < c; ++off) {
        const int cls = (dominant + off) % c;
        want[cls] = base + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
      }
    } else {
      want[dominant] = quota[i];
    }
    // Draw each class's demand; deficits spill to the next class cyclically.
    for (int off = 0; off < c; ++off) {
      const int cls = (dominant + off) % c;
      long need = want[cls];
      for (int probe = 0; probe < c && need > 0; ++probe) {
        auto& pool = pools[(cls + probe) % c];
        while (need > 0 && !pool.empty()) {
          partition.client_shards[i].push_back(pool.back());
          pool.pop_back();
          --need;
        }
      }
      if (need > 0) {
        throw std::runtime_error("partition_noniid: quota cannot be met, all pools exhausted");
      }
    }
  }
  for (auto& shard : partition.client_shards) std::sort(shard.begin(), shard.end());
  fill_histograms(set, partition);
  return partition;
}

std::pair<double, Partition> calibrate_dominant_fraction(const GraphSet& set, int num_clients,
                                                         double target_emd, double tolerance,
                                                         std::mt19937_64& rng) {
  if (target_emd < 0.0 || target_emd > 2.0) {
    throw std::invalid_argument("calibrate_dominant_fraction: target must lie in [0, 2]");
  }
  const double lo_fraction = 1.0 / static_cast<double>(set.num_classes);
  const std::uint64_t base_seed = rng();

  auto emd_at = [&](double fraction) {
    auto local = make_rng(base_seed, 0x9a17);  // same draw stream for every probe
    return partition_noniid(set, num_clients, fraction, local);
  };

  Partition at_lo = emd_at(lo_fraction);
  Partition at_hi = emd_at(1.0);
  if (target_emd < at_lo.emd - tolerance || target_emd > at_hi.emd + tolerance) {
    std::ostringstream msg;
    msg << "calibrate_dominant_fraction: target " << target_emd
        << " outside the achievable range [" << at_lo.emd << ", " << at_hi.emd << "]";
    throw std::runtime_error(msg.str());
  }
  if (std::abs(at_lo.emd - target_emd) <= tolerance) return {lo_fraction, std::move(at_lo)};
  if (std::abs(at_hi.emd - target_emd) <= tolerance) return {1.0, std::move(at_hi)};

  double lo = lo_fraction, hi = 1.0;
  double best_fraction = lo_fraction;
  Partition best = std::move(at_lo);
  for (int iter = 0; iter < 50; ++iter) {
    const double mid = 0.5 * (lo + hi);
    Partition candidate = emd_at(mid);
    if (std::abs(candidate.emd - target_emd) < std::abs(best.emd - target_emd)) {
      best = candidate;
      best_fraction = mid;
    }
    if (std::abs(candidate.emd - target_emd) <= tolerance) {
      return {mid, std::move(candidate)};
    }
    (candidate.emd < target_emd ? lo : hi) = mid;
  }
  return {best_fraction, std::move(best)};
}

void save_manifest(const std::filesystem::path& path, const Partition& partition) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_manifest: cannot open " + path.string());
  for (size_t i = 0; i < partition.client_shards.size(); ++i) {
    out << "client " << i << ":";
    for (int id : partition.client_shards[i]) out << ' ' << id;
    out << '\n';
  }
  if (!partition.server_shard.empty()) {
    out << "server:";
    for (int id : partition.server_shard) out << ' ' << id;
    out << '\n';
  }
}

Partition load_manifest(const std::filesystem::path& path, const GraphSet& set) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path.string());
  Partition partition;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string head;
    ss >> head;
    std::vector<int>* target = nullptr;
    if (head == "client") {
      int idx = 0;
      ss >> idx;
      std::string colon;
      ss >> colon;
      partition.client_shards.resize(std::max<size_t>(partition.client_shards.size(), idx + 1));
      target = &partition.client_shards[idx];
    } else if (head == "server:") {
      target = &partition.server_shard;
    } else {
      throw std::runtime_error("load_manifest: unrecognized line '" + line + "'");
    }
    int id = 0;
    while (ss >> id) target->push_back(id);
  }
  fill_histograms(set, partition);
  return partition;
}

}  // namespace fclg
