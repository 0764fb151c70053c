#include "fclg/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fclg/diffusion.hpp"

namespace fclg {

namespace {

std::ifstream open_required(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("missing required dataset file: " + path.string());
  }
  return in;
}

[[noreturn]] void format_error(const std::filesystem::path& path, long line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<long> read_int_column(const std::filesystem::path& path) {
  auto in = open_required(path);
  std::vector<long> values;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      values.push_back(std::stol(line));
    } catch (const std::exception&) {
      format_error(path, lineno, "expected an integer, got '" + line + "'");
    }
  }
  return values;
}

std::vector<std::vector<double>> read_real_rows(const std::filesystem::path& path) {
  auto in = open_required(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        row.push_back(std::stod(item));
      } catch (const std::exception&) {
        format_error(path, lineno, "expected a real number, got '" + item + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

double GraphSet::mean_nodes() const {
  if (graphs.empty()) return 0.0;
  long total = 0;
  for (const auto& g : graphs) total += g.num_nodes;
  return static_cast<double>(total) / static_cast<double>(graphs.size());
}

double GraphSet::mean_edges() const {
  if (graphs.empty()) return 0.0;
  long total = 0;
  for (const auto& g : graphs) total += g.num_edges();
  return static_cast<double>(total) / static_cast<double>(graphs.size());
}

std::vector<int> GraphSet::labels() const {
  std::vector<int> out(graphs.size());
  for (size_t i = 0; i < graphs.size(); ++i) out[i] = graphs[i].label;
  return out;
}

void GraphSet::precompute_diffusion(double alpha) {
  for (auto& g : graphs) {
    g.diffusion = ppr_diffusion(g, alpha).S;
  }
  diffusion_alpha = alpha;
}

GraphSet load_tu_dataset(const std::filesystem::path& data_dir, const std::string& name) {
  const auto dir = data_dir / name;
  const auto file = [&](const char* suffix) { return dir / (name + suffix); };

  const auto indicator_path = file("_graph_indicator.txt");
  const std::vector<long> indicator = read_int_column(indicator_path);
  const long num_nodes_total = static_cast<long>(indicator.size());
  if (num_nodes_total == 0) {
    throw std::runtime_error("empty graph indicator: " + indicator_path.string());
  }

  const auto labels_path = file("_graph_labels.txt");
  const std::vector<long> raw_graph_labels = read_int_column(labels_path);
  const long num_graphs = static_cast<long>(raw_graph_labels.size());

  // Node line i (1-indexed) belongs to graph indicator[i-1] (1-indexed).
  // The format stores nodes grouped by graph; enforce that so per-graph
  // feature blocks stay contiguous.
  std::vector<int> graph_of_node(num_nodes_total);
  std::vector<int> node_count(num_graphs, 0);
  for (long i = 0; i < num_nodes_total; ++i) {
    const long g = indicator[i];
    if (g < 1 || g > num_graphs) {
      format_error(indicator_path, i + 1, "graph id " + std::to_string(g) + " out of range [1, " + std::to_string(num_graphs) + "]");
    }
    if (i > 0 && g < indicator[i - 1]) {
      format_error(indicator_path, i + 1, "graph indicator must be non-decreasing");
    }
    graph_of_node[i] = static_cast<int>(g - 1);
    ++node_count[g - 1];
  }
  std::vector<long> node_offset(num_graphs + 1, 0);
  for (long g = 0; g < num_graphs; ++g) node_offset[g + 1] = node_offset[g] + node_count[g];

  // Edges: 1-indexed global node ids, one directed line per direction in the
  // published files; canonicalize to one entry per unordered pair.
  const auto a_path = file("_A.txt");
  auto a_in = open_required(a_path);
  std::vector<std::set<std::pair<int, int>>> edge_sets(num_graphs);
  {
    std::string line;
    long lineno = 0;
    while (std::getline(a_in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      long u = 0, v = 0;
      char comma = 0;
      std::stringstream ss(line);
      if (!(ss >> u >> comma >> v) || comma != ',') {
        format_error(a_path, lineno, "expected 'row, col', got '" + line + "'");
      }
      if (u < 1 || u > num_nodes_total || v < 1 || v > num_nodes_total) {
        format_error(a_path, lineno, "node id out of range [1, " + std::to_string(num_nodes_total) + "]");
      }
      const int gu = graph_of_node[u - 1];
      const int gv = graph_of_node[v - 1];
      if (gu != gv) {
        format_error(a_path, lineno, "edge crosses graphs " + std::to_string(gu + 1) + " and " + std::to_string(gv + 1));
      }
      const int lu = static_cast<int>(u - 1 - node_offset[gu]);
      const int lv = static_cast<int>(v - 1 - node_offset[gu]);
      edge_sets[gu].insert({std::min(lu, lv), std::max(lu, lv)});
    }
  }

  // Node features, in preference order: one-hot node labels, raw node
  // attributes, one-hot degree.
  const auto node_labels_path = file("_node_labels.txt");
  const auto node_attrs_path = file("_node_attributes.txt");
  Matrix features;  // num_nodes_total x F
  if (std::filesystem::exists(node_labels_path)) {
    const std::vector<long> node_labels = read_int_column(node_labels_path);
    if (static_cast<long>(node_labels.size()) != num_nodes_total) {
      format_error(node_labels_path, static_cast<long>(node_labels.size()),
                   "node label count does not match the graph indicator");
    }
    std::map<long, int> index;
    for (long v : node_labels) index.emplace(v, 0);
    int next = 0;
    for (auto& [value, idx] : index) idx = next++;
    features = Matrix::Zero(num_nodes_total, next);
    for (long i = 0; i < num_nodes_total; ++i) features(i, index.at(node_labels[i])) = 1.0;
  } else if (std::filesystem::exists(node_attrs_path)) {
    const auto rows = read_real_rows(node_attrs_path);
    if (static_cast<long>(rows.size()) != num_nodes_total) {
      format_error(node_attrs_path, static_cast<long>(rows.size()),
                   "node attribute count does not match the graph indicator");
    }
    const size_t dim = rows[0].size();
    features = Matrix::Zero(num_nodes_total, static_cast<long>(dim));
    for (long i = 0; i < num_nodes_total; ++i) {
      if (rows[i].size() != dim) {
        format_error(node_attrs_path, i + 1, "ragged attribute row");
      }
      for (size_t j = 0; j < dim; ++j) {
        if (!std::isfinite(rows[i][j])) format_error(node_attrs_path, i + 1, "non-finite attribute");
        features(i, static_cast<long>(j)) = rows[i][j];
      }
    }
  } else {
    std::vector<int> degree(num_nodes_total, 0);
    for (long g = 0; g < num_graphs; ++g) {
      for (const auto& [u, v] : edge_sets[g]) {
        ++degree[node_offset[g] + u];
        if (u != v) ++degree[node_offset[g] + v];
      }
    }
    const int max_degree = degree.empty() ? 0 : *std::max_element(degree.begin(), degree.end());
    features = Matrix::Zero(num_nodes_total, max_degree + 1);
    for (long i = 0; i < num_nodes_total; ++i) features(i, degree[i]) = 1.0;
  }

  // Graph labels can be arbitrary integers (ENZYMES 1..6, DHFR -1/1);
  // remap ascending to a dense [0, C).
  std::map<long, int> label_index;
  for (long v : raw_graph_labels) label_index.emplace(v, 0);
  int next_label = 0;
  for (auto& [value, idx] : label_index) idx = next_label++;

  GraphSet set;
  set.name = name;
  set.num_classes = next_label;
  set.feature_dim = static_cast<int>(features.cols());
  set.graphs.resize(num_graphs);
  for (long g = 0; g < num_graphs; ++g) {
    Graph& graph = set.graphs[g];
    graph.id = static_cast<int>(g);
    graph.num_nodes = node_count[g];
    graph.label = label_index.at(raw_graph_labels[g]);
    graph.edges.assign(edge_sets[g].begin(), edge_sets[g].end());
    graph.node_features = features.middleRows(node_offset[g], node_count[g]);
  }
  return set;
}

GraphBatch make_batch(const GraphSet& set, const std::vector<int>& graph_ids) {
  if (graph_ids.empty()) {
    throw std::invalid_argument("make_batch: empty graph id list");
  }
  GraphBatch batch;
  batch.batch_size = static_cast<int>(graph_ids.size());
  batch.graph_ids = graph_ids;
  batch.node_offsets.resize(batch.batch_size + 1);
  batch.node_offsets[0] = 0;
  for (int b = 0; b < batch.batch_size; ++b) {
    const Graph& g = set.graphs.at(graph_ids[b]);
    batch.node_offsets[b + 1] = batch.node_offsets[b] + g.num_nodes;
  }
  const int total = batch.node_offsets.back();
  batch.membership.resize(total);
  batch.features.resize(total, set.feature_dim);
  batch.diffusion.resize(batch.batch_size);

  std::vector<std::vector<int>> neighbors(total);
  for (int b = 0; b < batch.batch_size; ++b) {
    const Graph& g = set.graphs[graph_ids[b]];
    const int base = batch.node_offsets[b];
    for (int v = 0; v < g.num_nodes; ++v) batch.membership[base + v] = b;
    batch.features.middleRows(base, g.num_nodes) = g.node_features;
    batch.diffusion[b] = g.diffusion.size() > 0 ? &g.diffusion : nullptr;
    for (const auto& [u, v] : g.edges) {
      neighbors[base + u].push_back(base + v);
      if (u != v) neighbors[base + v].push_back(base + u);
    }
  }
  batch.adj_ptr.resize(total + 1);
  batch.adj_ptr[0] = 0;
  for (int v = 0; v < total; ++v) {
    std::sort(neighbors[v].begin(), neighbors[v].end());
    batch.adj_ptr[v + 1] = batch.adj_ptr[v] + static_cast<int>(neighbors[v].size());
  }
  batch.adj_idx.reserve(batch.adj_ptr.back());
  for (int v = 0; v < total; ++v) {
    batch.adj_idx.insert(batch.adj_idx.end(), neighbors[v].begin(), neighbors[v].end());
  }
  return batch;
}

std::vector<GraphBatch> make_batches(const GraphSet& set, const std::vector<int>& subset,
                                     int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  if (subset.empty()) throw std::invalid_argument("make_batches: empty graph set");
  std::vector<int> order = subset;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<GraphBatch> batches;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    batches.push_back(make_batch(set, {order.begin() + start, order.begin() + end}));
  }
  return batches;
}

std::vector<GraphBatch> make_batches(const GraphSet& set, int batch_size, std::mt19937_64& rng) {
  std::vector<int> all(set.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batches(set, all, batch_size, rng);
}

}  // namespace fclg
