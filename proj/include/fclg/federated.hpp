#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fclg/encoder.hpp"
#include "fclg/graph.hpp"
#include "fclg/losses.hpp"
#include "fclg/partition.hpp"

namespace fclg {

enum class Variant {
  fclg,            // intra + graph-level inter contrast
  fclg_h,          // intra + node-level inter contrast
  intra_fedavg,    // intra only
  intra_fedprox,   // intra + proximal term
  intra_kl,        // intra + KL distillation against the global model
  intra_mse,       // intra + MSE distillation against the global model
  intra_central,   // single-model intra training on the union of all data
  vanilla_ensemble // intra-only clients + server-side intra pass on its own shard
};

enum class OptimizerKind { adamw, sgd };

/// Similarity fed to the intra-contrast objective: raw inner products, or
/// cosine (rows L2-normalized before the loss, gradients chained through).
enum class IntraSimilarity { dot, cosine };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
NormKind parse_norm(const std::string& name);
std::string norm_name(NormKind norm);

struct FLConfig {
  Variant variant = Variant::fclg;
  int rounds = 20;        // T
  int local_epochs = 20;  // E
  int clients = 6;        // K
  double gamma = 1.0;     // participation fraction
  double tau = 100.0;
  double tau_prime = 0.5;
  double alpha = 0.05;    // diffusion teleport probability
  double lr = 1e-3;
  double weight_decay = 0.0;
  int batch_size = 128;
  int layers = 2;         // L
  int hidden = 128;       // d
  double kd_temperature = 1.0;
  double mu = 1e-2;            // FedProx strength
  double server_fraction = -1; // vanilla ensemble; < 0 means 1 / (K + 1)
  int server_epochs = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adamw;
  IntraSimilarity intra_similarity = IntraSimilarity::dot;
  NormKind norm = NormKind::batch;  // inter-layer activation normalization
  int kmeans_restarts = 10;
  bool concurrent_clients = false;
  std::string checkpoint_dir;  // per-round checkpoints when non-empty
  int resume_round = -1;       // continue from this round's checkpoint

  void validate() const;  // throws on any range violation
};

struct ClientState {
  int id = 0;
  std::vector<int> shard;
  EncoderParams params;
  EncoderParams snapshot;  // parameters that ended the previous local epoch
  std::mt19937_64 rng;
};

struct RoundMetrics {
  int round = 0;
  double intra_loss = 0.0;
  double inter_loss = 0.0;  // inter / KD / proximal component, variant dependent
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double wall_seconds = 0.0;
};

struct FederatedResult {
  std::vector<RoundMetrics> rounds;
  EncoderParams model;
};

/// Data-size weighted average over the participating clients, summed in
/// client-index order. Weights are normalized over the participants.
Vector fedavg_aggregate(const std::vector<std::pair<Vector, long>>& client_params);

struct LocalTrainStats {
  double intra_sum = 0.0;
  double inter_sum = 0.0;
  long steps = 0;
};

/// Algorithm: E epochs over shuffled batches. Per batch the current model
/// encodes both views (U^t, V^t); the frozen global and previous-epoch
/// snapshot provide U_s and U_c^{t-1}; the variant loss is assembled and one
/// optimizer step taken. The snapshot refreshes at every epoch boundary and
/// equals the received global parameters when t = 1.
LocalTrainStats local_train(ClientState& client, const EncoderParams& global_params,
                            const FLConfig& config, const GraphSet& set);

/// Per-batch loss dispatch. u_s / u_prev (and h_s / h_prev for the node
/// variant) are frozen lookups; the returned gradients cover U^t, V^t and,
/// for fclg_h, H^t.
struct VariantLoss {
  double intra = 0.0;
  double inter = 0.0;
  Matrix grad_u;       // d total / d U^t
  Matrix grad_v;       // d total / d V^t
  Matrix grad_h;       // d total / d H^t, empty unless used
  Vector grad_params;  // parameter-space term (FedProx), empty otherwise
};
VariantLoss variant_dispatch(Variant variant, const Matrix& u_t, const Matrix& v_t,
                             const Matrix& h_t, const Matrix& u_s, const Matrix& u_prev,
                             const Matrix& h_s, const Matrix& h_prev,
                             const Vector& params_flat, const Vector& global_flat,
                             const FLConfig& config);

/// The round loop: broadcast, sample ceil(gamma K) clients, local training
/// (sequential or concurrent; bitwise identical either way), FedAvg
/// aggregation, then clustering evaluation of the full set under the new
/// global model.
FederatedResult run_federated(const FLConfig& config, const Partition& partition,
                              const GraphSet& set);

/// Single-model intra-contrast training on the whole set, E*T epochs,
/// evaluated every E epochs for round comparability.
FederatedResult run_intra_central(const FLConfig& config, const GraphSet& set);

/// Intra-only clients; after aggregation the server runs `server_epochs`
/// intra passes on its own shard before broadcasting.
FederatedResult run_vanilla_ensemble(const FLConfig& config, const Partition& partition,
                                     const GraphSet& set);

/// Embeds the full set under `params` (original view, deterministic order)
/// and scores K-Means clustering against the labels.
struct EvalScores {
  double accuracy = 0.0;
  double f1_macro = 0.0;
};
Matrix embed_all(const EncoderParams& params, const GraphSet& set, int batch_size);
EvalScores evaluate_embeddings(const Matrix& embeddings, const GraphSet& set,
                               int restarts, std::uint64_t seed);

}  // namespace fclg
