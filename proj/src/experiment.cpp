#include "fclg/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fclg/eval.hpp"
#include "fclg/rng.hpp"

namespace fclg {

namespace {

using nlohmann::json;

json config_json(const ExperimentSpec& spec) {
  const FLConfig& c = spec.config;
  return json{{"dataset", spec.dataset},
              {"variant", variant_name(c.variant)},
              {"rounds", c.rounds},
              {"local_epochs", c.local_epochs},
              {"clients", c.clients},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"tau_prime", c.tau_prime},
              {"alpha", c.alpha},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"layers", c.layers},
              {"hidden", c.hidden},
              {"kd_temperature", c.kd_temperature},
              {"mu", c.mu},
              {"server_fraction", c.server_fraction},
              {"server_epochs", c.server_epochs},
              {"optimizer", c.optimizer == OptimizerKind::adamw ? "adamw" : "sgd"},
              {"intra_similarity", c.intra_similarity == IntraSimilarity::cosine ? "cosine" : "dot"},
              {"norm", norm_name(c.norm)},
              {"kmeans_restarts", c.kmeans_restarts},
              {"seed", c.seed},
              {"partition", spec.partition_mode == PartitionMode::iid ? "iid" : "noniid"},
              {"dominant_fraction", spec.dominant_fraction},
              {"target_emd", spec.target_emd},
              {"runs", spec.runs}};
}

Partition build_partition(const ExperimentSpec& spec, const GraphSet& set, double* fraction_used) {
  auto rng = make_rng(spec.config.seed, 0x7061);
  const double server_fraction =
      spec.config.variant == Variant::vanilla_ensemble
          ? (spec.config.server_fraction < 0.0
                 ? 1.0 / static_cast<double>(spec.config.clients + 1)
                 : spec.config.server_fraction)
          : 0.0;
  if (spec.partition_mode == PartitionMode::iid) {
    if (fraction_used != nullptr) *fraction_used = 0.0;
    return partition_iid(set, spec.config.clients, rng, server_fraction);
  }
  if (spec.target_emd >= 0.0) {
    if (server_fraction > 0.0) {
      throw std::invalid_argument("EMD calibration with a server shard is not supported; "
                                  "pass an explicit dominant fraction instead");
    }
    auto [fraction, partition] =
        calibrate_dominant_fraction(set, spec.config.clients, spec.target_emd, 0.02, rng);
    if (fraction_used != nullptr) *fraction_used = fraction;
    return partition;
  }
  const double fraction = spec.dominant_fraction;
  if (fraction_used != nullptr) *fraction_used = fraction;
  return partition_noniid(set, spec.config.clients, fraction, rng, server_fraction);
}

FederatedResult run_one(const ExperimentSpec& spec, const Partition& partition,
                        const GraphSet& set, std::uint64_t seed) {
  FLConfig config = spec.config;
  config.seed = seed;
  switch (config.variant) {
    case Variant::intra_central:
      return run_intra_central(config, set);
    case Variant::vanilla_ensemble:
      return run_vanilla_ensemble(config, partition, set);
    default:
      return run_federated(config, partition, set);
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("experiment: dataset name is required");
  if (runs < 1) throw std::invalid_argument("experiment: runs must be >= 1");
  if (out_path.empty()) throw std::invalid_argument("experiment: output path is required");
  const auto dir = std::filesystem::path(data_dir) / dataset;
  for (const char* suffix : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt"}) {
    const auto file = dir / (dataset + suffix);
    if (!std::filesystem::exists(file)) {
      throw std::invalid_argument("experiment: missing dataset file " + file.string());
    }
  }
  if (partition_mode == PartitionMode::noniid && dominant_fraction < 0.0 && target_emd < 0.0) {
    throw std::invalid_argument("experiment: non-IID needs --dominant-fraction or --target-emd");
  }
  if (dominant_fraction >= 0.0 && !(dominant_fraction > 0.0 && dominant_fraction <= 1.0)) {
    throw std::invalid_argument("experiment: dominant fraction must lie in (0, 1]");
  }
  if (target_emd >= 0.0 && target_emd > 2.0) {
    throw std::invalid_argument("experiment: target EMD must lie in [0, 2]");
  }
}

std::string config_hash(const ExperimentSpec& spec) {
  const std::string canon = config_json(spec).dump();
  // FNV-1a, printed as hex; stable across runs and platforms.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

ExperimentSummary run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  if (std::filesystem::exists(spec.out_path) && !spec.force) {
    throw std::runtime_error("experiment: output file exists, pass --force to overwrite: " +
                             spec.out_path);
  }

  GraphSet set = load_tu_dataset(spec.data_dir, spec.dataset);
  set.precompute_diffusion(spec.config.alpha);

  ExperimentSummary summary;
  const Partition partition = build_partition(spec, set, &summary.dominant_fraction);
  summary.emd = partition.emd;

  const std::string hash = config_hash(spec);
  std::ofstream out(spec.out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("experiment: cannot open output " + spec.out_path);

  std::vector<double> final_acc, final_f1;
  for (int run = 0; run < spec.runs; ++run) {
    const std::uint64_t seed = spec.config.seed + static_cast<std::uint64_t>(run);
    const FederatedResult result = run_one(spec, partition, set, seed);
    if (!spec.export_path.empty() && run == spec.runs - 1) {
      export_embeddings(embed_all(result.model, set, spec.config.batch_size), set.labels(),
                        spec.export_path);
    }
    summary.trajectories.push_back(result.rounds);
    for (const RoundMetrics& m : result.rounds) {
      const json record{{"type", "round"},    {"config", hash},
                        {"run", run},         {"seed", seed},
                        {"round", m.round},   {"intra_loss", m.intra_loss},
                        {"inter_loss", m.inter_loss}, {"accuracy", m.accuracy},
                        {"f1_macro", m.f1_macro},     {"wall_seconds", m.wall_seconds}};
      out << record.dump() << '\n';
      out.flush();
    }
    if (!result.rounds.empty()) {
      final_acc.push_back(result.rounds.back().accuracy);
      final_f1.push_back(result.rounds.back().f1_macro);
    }
  }

  auto mean_of = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  auto half_range_of = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return 0.5 * (*hi - *lo);
  };
  summary.accuracy_mean = mean_of(final_acc);
  summary.accuracy_half_range = half_range_of(final_acc);
  summary.f1_mean = mean_of(final_f1);
  summary.f1_half_range = half_range_of(final_f1);

  const json record{{"type", "summary"},
                    {"config", hash},
                    {"runs", spec.runs},
                    {"emd", summary.emd},
                    {"dominant_fraction", summary.dominant_fraction},
                    {"accuracy_mean", summary.accuracy_mean},
                    {"accuracy_half_range", summary.accuracy_half_range},
                    {"f1_mean", summary.f1_mean},
                    {"f1_half_range", summary.f1_half_range},
                    {"convergence", "final_round"}};
  out << record.dump() << '\n';
  return summary;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "target_emd" || name == "emd") return SweepAxis::target_emd;
  if (name == "clients" || name == "K") return SweepAxis::clients;
  if (name == "local_epochs" || name == "E") return SweepAxis::local_epochs;
  throw std::invalid_argument("unknown sweep axis: " + name);
}

std::vector<ExperimentSummary> sweep(const ExperimentSpec& spec, SweepAxis axis,
                                     const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no axis values");
  std::vector<ExperimentSummary> summaries;
  const std::filesystem::path base(spec.out_path);
  std::ostringstream table;
  table << "# axis value accuracy_mean accuracy_half_range f1_mean f1_half_range emd\n";
  for (double value : values) {
    ExperimentSpec point = spec;
    switch (axis) {
      case SweepAxis::target_emd:
        point.target_emd = value;
        point.dominant_fraction = -1.0;
        point.partition_mode = PartitionMode::noniid;
        break;
      case SweepAxis::clients:
        point.config.clients = static_cast<int>(value);
        break;
      case SweepAxis::local_epochs:
        point.config.local_epochs = static_cast<int>(value);
        break;
    }
    std::ostringstream name;
    name << base.stem().string() << "_" << value << base.extension().string();
    point.out_path = (base.parent_path() / name.str()).string();
    summaries.push_back(run_experiment(point));
    const ExperimentSummary& s = summaries.back();
    table << value << ' ' << s.accuracy_mean << ' ' << s.accuracy_half_range << ' ' << s.f1_mean
          << ' ' << s.f1_half_range << ' ' << s.emd << '\n';
  }
  std::ofstream agg(base);
  if (!agg) throw std::runtime_error("sweep: cannot open aggregate output " + spec.out_path);
  agg << table.str();
  std::cout << table.str();
  return summaries;
}

}  // namespace fclg
