#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fclg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One attributed, undirected graph. Edges are stored once per unordered
/// pair (u <= v) with 0-indexed endpoints; the adjacency is materialized
/// symmetric wherever it is consumed.
struct Graph {
  int id = 0;
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  Matrix node_features;  // num_nodes x F
  int label = 0;         // dense class index in [0, C)
  Matrix diffusion;      // n x n PPR weights, filled by GraphSet::precompute_diffusion

  int num_edges() const { return static_cast<int>(edges.size()); }
};

struct GraphSet {
  std::vector<Graph> graphs;
  int num_classes = 0;
  int feature_dim = 0;
  std::string name;
  double diffusion_alpha = 0.0;  // 0 while diffusion is not precomputed

  int size() const { return static_cast<int>(graphs.size()); }
  double mean_nodes() const;
  double mean_edges() const;
  std::vector<int> labels() const;

  // Computes and caches the PPR diffusion matrix of every graph.
  // Call once after loading, before any diffused-view encoding.
  void precompute_diffusion(double alpha);
};

/// Loads a dataset in TU format from `data_dir/name/`.
///
/// Required files: name_A.txt (comma-separated "row, col", 1-indexed global
/// node ids), name_graph_indicator.txt, name_graph_labels.txt.
/// Optional: name_node_labels.txt, name_node_attributes.txt.
///
/// Node features: one-hot node labels if present, else raw node attributes,
/// else one-hot node degree (dimension = dataset max degree + 1).
/// Graph labels are remapped to a dense [0, C) range in ascending order of
/// the raw values.
GraphSet load_tu_dataset(const std::filesystem::path& data_dir, const std::string& name);

/// A block-diagonal stack of graphs. Node rows follow graph order; the
/// original view keeps binary neighbor lists (CSR over batch-local ids)
/// and the diffused view points at each member graph's cached PPR matrix.
struct GraphBatch {
  std::vector<int> node_offsets;  // size batch_size + 1, last entry = total nodes
  std::vector<int> membership;    // per node: local graph index
  Matrix features;                // N_total x F
  std::vector<int> adj_ptr;       // CSR neighbor lists, batch-local node ids
  std::vector<int> adj_idx;
  std::vector<const Matrix*> diffusion;  // per graph, may hold nullptr if not precomputed
  std::vector<int> graph_ids;     // member ids into the owning GraphSet
  int batch_size = 0;

  int total_nodes() const { return static_cast<int>(membership.size()); }
  int graph_nodes(int g) const { return node_offsets[g + 1] - node_offsets[g]; }
};

/// Assembles one batch from the given graph ids (order preserved).
GraphBatch make_batch(const GraphSet& set, const std::vector<int>& graph_ids);

/// Shuffles `subset` with `rng` and cuts it into batches of `batch_size`;
/// the final partial batch is retained. Every listed graph appears exactly once.
std::vector<GraphBatch> make_batches(const GraphSet& set, const std::vector<int>& subset,
                                     int batch_size, std::mt19937_64& rng);

/// Batches the whole set.
std::vector<GraphBatch> make_batches(const GraphSet& set, int batch_size, std::mt19937_64& rng);

}  // namespace fclg
