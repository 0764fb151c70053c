#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "fclg/graph.hpp"

namespace fclg {

enum class View { original, diffused };

/// Normalization applied to every layer output (affine-free, no trainable
/// parameters).
///   none:  h = ReLU(z2)
///   layer: per node, statistics across the feature dimension;
///          batch-independent, keeps per-graph embeddings standalone
///   batch: per feature, statistics across all nodes in the batch;
///          couples representations to batch composition (schedules are
///          seed-deterministic, so runs still reproduce bit for bit)
enum class NormKind { none, layer, batch };

/// One GIN block: a 2-layer MLP applied to the aggregated neighborhood.
/// w1 is d_in x d, w2 is d x d; epsilon is the self-weight offset (fixed 0).
struct GinLayerParams {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  double epsilon = 0.0;
};

/// All trainable encoder parameters.
///
/// Canonical flat ordering (the contract for aggregation, optimizers and
/// checkpoints): layer-major, within a layer w1, b1, w2, b2, matrices
/// row-major.
///
/// `norm` selects the inter-layer normalization; it carries no trainable
/// parameters and is not part of the flat vector.
struct EncoderParams {
  std::vector<GinLayerParams> layers;
  int input_dim = 0;   // F
  int hidden_dim = 0;  // d
  NormKind norm = NormKind::none;

  int num_layers() const { return static_cast<int>(layers.size()); }
  long flat_size() const;
  Vector to_flat() const;
  void set_flat(const Vector& flat);
  static EncoderParams from_flat(const Vector& flat, int num_layers, int input_dim, int hidden_dim);
};

/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases,
/// epsilon = 0.
EncoderParams init_params(int num_layers, int input_dim, int hidden_dim, std::mt19937_64& rng);

long param_count(int num_layers, int input_dim, int hidden_dim);

struct EncoderOutput {
  std::vector<Matrix> layer_nodes;  // h^k, each N x d, k = 1..L
  Matrix node_repr;                 // H = [h^1 | ... | h^L], N x (L*d)
  Matrix graph_repr;                // U, B x (L*d): per-graph column sums of H
};

/// Forward intermediates kept for the hand-written backward pass.
struct EncoderTrace {
  View view = View::original;
  std::vector<Matrix> inputs;  // h^{k-1} fed to layer k (inputs[0] = X)
  std::vector<Matrix> agg;     // (1+eps) h + sum_u w_vu h_u
  std::vector<Matrix> z1;      // agg * w1 + b1 (pre-ReLU)
  std::vector<Matrix> r1;      // ReLU(z1)
  std::vector<Matrix> z2;      // r1 * w2 + b2 (pre-ReLU)
  std::vector<Vector> norm_scale;  // per-node (layer) or per-feature (batch) std
  EncoderOutput out;
};

/// Layer rule: h_v^k = MLP_k((1 + eps_k) h_v^{k-1} + sum_u w_vu h_u^{k-1})
/// with w binary adjacency (original) or the cached PPR weights (diffused);
/// ReLU after both MLP layers. h^0 = X. Summation follows node-index order,
/// so results are reproducible bit for bit.
EncoderOutput encode(const EncoderParams& params, const GraphBatch& batch, View view);

EncoderTrace encode_traced(const EncoderParams& params, const GraphBatch& batch, View view);

/// Exact reverse-mode gradient of a scalar loss with respect to the
/// canonical flat parameter vector. Either upstream may be null (treated
/// as zero); grad_graph_repr is d loss / d U, grad_node_repr is d loss / d H.
Vector encoder_backward(const EncoderParams& params, const GraphBatch& batch,
                        const EncoderTrace& trace,
                        const Matrix* grad_graph_repr,
                        const Matrix* grad_node_repr);

/// encode_traced + encoder_backward in one call.
Vector encode_with_grad(const EncoderParams& params, const GraphBatch& batch, View view,
                        const Matrix* grad_graph_repr, const Matrix* grad_node_repr,
                        EncoderOutput* out = nullptr);

/// Checkpoint file: int64 header (L, F, d) followed by the canonical flat
/// vector, all little-endian 64-bit.
void save_params(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_params(const std::filesystem::path& path);

}  // namespace fclg
