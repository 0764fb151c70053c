// Experiment runner for federated contrastive graph-level representation
// learning. Subcommands:
//   fclg run    one experiment (repeated over seeds), JSONL records
//   fclg sweep  run per value of one axis (emd | K | E), aggregate table
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fclg/experiment.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace {

struct CliOptions {
  fclg::ExperimentSpec spec;
  std::string variant = "fclg";
  std::string partition = "noniid";
  std::string optimizer = "adamw";
  std::string intra_similarity = "dot";
  std::string norm = "batch";
  std::string axis;
  std::vector<double> values;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
  auto& spec = opt.spec;
  auto& cfg = spec.config;
  cmd->add_option("--dataset", spec.dataset, "TU dataset name (e.g. PROTEINS)")->required();
  cmd->add_option("--data-dir", spec.data_dir, "directory holding the TU dataset folders");
  cmd->add_option("--variant", opt.variant,
                  "fclg | fclg_h | intra_fedavg | intra_fedprox | intra_kl | intra_mse | "
                  "intra_central | vanilla_ensemble");
  cmd->add_option("--clients", cfg.clients, "number of clients K");
  cmd->add_option("--rounds", cfg.rounds, "communication rounds T");
  cmd->add_option("--local-epochs", cfg.local_epochs, "local epochs E per round");
  cmd->add_option("--gamma", cfg.gamma, "fraction of clients participating per round");
  cmd->add_option("--partition", opt.partition, "iid | noniid");
  cmd->add_option("--dominant-fraction", spec.dominant_fraction,
                  "non-IID dominant label share in (0, 1]");
  cmd->add_option("--target-emd", spec.target_emd, "calibrate the non-IID skew to this EMD");
  cmd->add_option("--tau", cfg.tau, "intra-contrast temperature");
  cmd->add_option("--tau-prime", cfg.tau_prime, "inter-contrast temperature");
  cmd->add_option("--alpha", cfg.alpha, "diffusion teleport probability");
  cmd->add_option("--lr", cfg.lr, "learning rate");
  cmd->add_option("--weight-decay", cfg.weight_decay, "AdamW decoupled weight decay");
  cmd->add_option("--batch-size", cfg.batch_size, "graphs per batch");
  cmd->add_option("--layers", cfg.layers, "GIN layers L");
  cmd->add_option("--hidden", cfg.hidden, "hidden width d");
  cmd->add_option("--kd-temperature", cfg.kd_temperature, "softmax temperature for intra_kl");
  cmd->add_option("--mu", cfg.mu, "FedProx proximal strength");
  cmd->add_option("--server-fraction", cfg.server_fraction,
                  "server shard fraction for vanilla_ensemble (default 1/(K+1))");
  cmd->add_option("--server-epochs", cfg.server_epochs, "server intra epochs per round");
  cmd->add_option("--optimizer", opt.optimizer, "adamw | sgd");
  cmd->add_option("--intra-similarity", opt.intra_similarity,
                  "similarity inside the intra-contrast loss: cosine | dot");
  cmd->add_option("--norm", opt.norm, "inter-layer normalization: none | layer | batch");
  cmd->add_option("--kmeans-restarts", cfg.kmeans_restarts, "K-Means restarts per evaluation");
  cmd->add_option("--runs", spec.runs, "repeat runs with seeds seed, seed+1, ...");
  cmd->add_option("--seed", cfg.seed, "base seed");
  cmd->add_option("--out", spec.out_path, "output JSONL path")->required();
  cmd->add_option("--export-embeddings", spec.export_path,
                  "write the final run's graph embeddings (label, values) here");
  cmd->add_flag("--force", spec.force, "overwrite an existing output file");
  cmd->add_flag("--concurrent-clients", cfg.concurrent_clients,
                "train participating clients on worker threads");
  cmd->add_option("--checkpoint-dir", cfg.checkpoint_dir, "write per-round checkpoints here");
  cmd->add_option("--resume-round", cfg.resume_round, "resume from this round's checkpoint");
  cmd->set_config("--config", "", "key=value config file; flags win over file entries");
}

void finalize(CliOptions& opt) {
  opt.spec.config.variant = fclg::parse_variant(opt.variant);
  if (opt.partition == "iid") {
    opt.spec.partition_mode = fclg::PartitionMode::iid;
  } else if (opt.partition == "noniid") {
    opt.spec.partition_mode = fclg::PartitionMode::noniid;
  } else {
    throw CLI::ValidationError("--partition", "must be iid or noniid");
  }
  if (opt.optimizer == "adamw") {
    opt.spec.config.optimizer = fclg::OptimizerKind::adamw;
  } else if (opt.optimizer == "sgd") {
    opt.spec.config.optimizer = fclg::OptimizerKind::sgd;
  } else {
    throw CLI::ValidationError("--optimizer", "must be adamw or sgd");
  }
  if (opt.intra_similarity == "cosine") {
    opt.spec.config.intra_similarity = fclg::IntraSimilarity::cosine;
  } else if (opt.intra_similarity == "dot") {
    opt.spec.config.intra_similarity = fclg::IntraSimilarity::dot;
  } else {
    throw CLI::ValidationError("--intra-similarity", "must be cosine or dot");
  }
  opt.spec.config.norm = fclg::parse_norm(opt.norm);
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training loops allocate multi-megabyte temporaries every batch; keep
  // them in the arena instead of bouncing mmap/munmap through the kernel.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Federated two-level contrastive learning of graph-level representations"};
  app.require_subcommand(1);

  CliOptions run_opt;
  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common_flags(run_cmd, run_opt);

  CliOptions sweep_opt;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
  add_common_flags(sweep_cmd, sweep_opt);
  sweep_cmd->add_option("--axis", sweep_opt.axis, "target_emd | clients | local_epochs")->required();
  sweep_cmd->add_option("--values", sweep_opt.values, "axis values")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      finalize(run_opt);
      const auto summary = fclg::run_experiment(run_opt.spec);
      std::cout << "accuracy " << 100.0 * summary.accuracy_mean << " +- "
                << 100.0 * summary.accuracy_half_range << ", macro-F1 "
                << 100.0 * summary.f1_mean << " +- " << 100.0 * summary.f1_half_range
                << " (EMD " << summary.emd << ")\n";
    } else {
      finalize(sweep_opt);
      fclg::sweep(sweep_opt.spec, fclg::parse_sweep_axis(sweep_opt.axis), sweep_opt.values);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
