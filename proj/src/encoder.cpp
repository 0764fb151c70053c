#include "fclg/encoder.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace fclg {

namespace {

// Neighborhood aggregation for one layer input: (1 + eps) h_v + sum_u w_vu h_u.
// The original view walks binary neighbor lists in node-index order; the
// diffused view multiplies each graph block with its dense PPR weights.
Matrix aggregate(const GraphBatch& batch, View view, const Matrix& x, double epsilon) {
  Matrix agg = (1.0 + epsilon) * x;
  if (view == View::original) {
    for (int v = 0; v < batch.total_nodes(); ++v) {
      for (int e = batch.adj_ptr[v]; e < batch.adj_ptr[v + 1]; ++e) {
        agg.row(v) += x.row(batch.adj_idx[e]);
      }
    }
  } else {
    for (int b = 0; b < batch.batch_size; ++b) {
      const Matrix* s = batch.diffusion[b];
      if (s == nullptr) {
        throw std::runtime_error("encode: diffused view requested but diffusion is not precomputed");
      }
      const int base = batch.node_offsets[b];
      const int n = batch.graph_nodes(b);
      agg.middleRows(base, n).noalias() += (*s) * x.middleRows(base, n);
    }
  }
  return agg;
}

// Transpose of `aggregate` for the backward pass; both weight matrices are
// symmetric but the transpose is written out to keep the math explicit.
Matrix aggregate_backward(const GraphBatch& batch, View view, const Matrix& grad_agg,
                          double epsilon) {
  Matrix grad_x = (1.0 + epsilon) * grad_agg;
  if (view == View::original) {
    for (int v = 0; v < batch.total_nodes(); ++v) {
      for (int e = batch.adj_ptr[v]; e < batch.adj_ptr[v + 1]; ++e) {
        grad_x.row(batch.adj_idx[e]) += grad_agg.row(v);
      }
    }
  } else {
    for (int b = 0; b < batch.batch_size; ++b) {
      const Matrix* s = batch.diffusion[b];
      const int base = batch.node_offsets[b];
      const int n = batch.graph_nodes(b);
      grad_x.middleRows(base, n).noalias() += s->transpose() * grad_agg.middleRows(base, n);
    }
  }
  return grad_x;
}

void check_dims(const EncoderParams& params, const GraphBatch& batch) {
  if (batch.features.cols() != params.input_dim) {
    throw std::invalid_argument("encode: batch feature dim " + std::to_string(batch.features.cols()) +
                                " does not match encoder input dim " + std::to_string(params.input_dim));
  }
}

constexpr double kNormEps = 1e-5;

// Affine-free normalization y = (x - mean) / sqrt(var + eps); statistics per
// node row (layer) or per feature column (batch).
Matrix normalize_activations(NormKind kind, const Matrix& x, Vector& scale) {
  Matrix y(x.rows(), x.cols());
  if (kind == NormKind::layer) {
    const auto d = static_cast<double>(x.cols());
    scale.resize(x.rows());
    for (long r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().sum() / d;
      scale(r) = std::sqrt(var + kNormEps);
      y.row(r) = (x.row(r).array() - mean) / scale(r);
    }
  } else {
    const auto n = static_cast<double>(x.rows());
    scale.resize(x.cols());
    for (long c = 0; c < x.cols(); ++c) {
      const double mean = x.col(c).mean();
      const double var = (x.col(c).array() - mean).square().sum() / n;
      scale(c) = std::sqrt(var + kNormEps);
      y.col(c) = (x.col(c).array() - mean) / scale(c);
    }
  }
  return y;
}

// Backward of the normalization: dx = (dy - mean(dy) - y * mean(dy .* y)) / s,
// with the means taken over the same axis the statistics came from.
Matrix normalize_backward(NormKind kind, const Matrix& grad_y, const Matrix& y,
                          const Vector& scale) {
  Matrix grad_x(y.rows(), y.cols());
  if (kind == NormKind::layer) {
    const auto d = static_cast<double>(y.cols());
    for (long r = 0; r < y.rows(); ++r) {
      const double mean_g = grad_y.row(r).mean();
      const double mean_gy = (grad_y.row(r).array() * y.row(r).array()).sum() / d;
      grad_x.row(r) = (grad_y.row(r).array() - mean_g - y.row(r).array() * mean_gy) / scale(r);
    }
  } else {
    const auto n = static_cast<double>(y.rows());
    for (long c = 0; c < y.cols(); ++c) {
      const double mean_g = grad_y.col(c).mean();
      const double mean_gy = (grad_y.col(c).array() * y.col(c).array()).sum() / n;
      grad_x.col(c) = (grad_y.col(c).array() - mean_g - y.col(c).array() * mean_gy) / scale(c);
    }
  }
  return grad_x;
}

}  // namespace

long param_count(int num_layers, int input_dim, int hidden_dim) {
  const long d = hidden_dim;
  long total = 0;
  for (int k = 0; k < num_layers; ++k) {
    const long d_in = (k == 0) ? input_dim : d;
    total += d_in * d + d + d * d + d;
  }
  return total;
}

long EncoderParams::flat_size() const {
  return param_count(num_layers(), input_dim, hidden_dim);
}

Vector EncoderParams::to_flat() const {
  Vector flat(flat_size());
  long pos = 0;
  for (const auto& layer : layers) {
    for (long i = 0; i < layer.w1.rows(); ++i)
      for (long j = 0; j < layer.w1.cols(); ++j) flat(pos++) = layer.w1(i, j);
    for (long i = 0; i < layer.b1.size(); ++i) flat(pos++) = layer.b1(i);
    for (long i = 0; i < layer.w2.rows(); ++i)
      for (long j = 0; j < layer.w2.cols(); ++j) flat(pos++) = layer.w2(i, j);
    for (long i = 0; i < layer.b2.size(); ++i) flat(pos++) = layer.b2(i);
  }
  return flat;
}

void EncoderParams::set_flat(const Vector& flat) {
  if (flat.size() != flat_size()) {
    throw std::invalid_argument("set_flat: expected length " + std::to_string(flat_size()) +
                                ", got " + std::to_string(flat.size()));
  }
  long pos = 0;
  for (auto& layer : layers) {
    for (long i = 0; i < layer.w1.rows(); ++i)
      for (long j = 0; j < layer.w1.cols(); ++j) layer.w1(i, j) = flat(pos++);
    for (long i = 0; i < layer.b1.size(); ++i) layer.b1(i) = flat(pos++);
    for (long i = 0; i < layer.w2.rows(); ++i)
      for (long j = 0; j < layer.w2.cols(); ++j) layer.w2(i, j) = flat(pos++);
    for (long i = 0; i < layer.b2.size(); ++i) layer.b2(i) = flat(pos++);
  }
}

EncoderParams EncoderParams::from_flat(const Vector& flat, int num_layers, int input_dim,
                                       int hidden_dim) {
  EncoderParams params;
  params.input_dim = input_dim;
  params.hidden_dim = hidden_dim;
  params.layers.resize(num_layers);
  for (int k = 0; k < num_layers; ++k) {
    const int d_in = (k == 0) ? input_dim : hidden_dim;
    params.layers[k].w1 = Matrix::Zero(d_in, hidden_dim);
    params.layers[k].b1 = Vector::Zero(hidden_dim);
    params.layers[k].w2 = Matrix::Zero(hidden_dim, hidden_dim);
    params.layers[k].b2 = Vector::Zero(hidden_dim);
  }
  params.set_flat(flat);
  return params;
}

EncoderParams init_params(int num_layers, int input_dim, int hidden_dim, std::mt19937_64& rng) {
  if (num_layers < 1 || input_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("init_params: L, F and d must all be >= 1");
  }
  EncoderParams params;
  params.input_dim = input_dim;
  params.hidden_dim = hidden_dim;
  params.layers.resize(num_layers);
  auto glorot = [&rng](long rows, long cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
  };
  for (int k = 0; k < num_layers; ++k) {
    const int d_in = (k == 0) ? input_dim : hidden_dim;
    params.layers[k].w1 = glorot(d_in, hidden_dim);
    params.layers[k].b1 = Vector::Zero(hidden_dim);
    params.layers[k].w2 = glorot(hidden_dim, hidden_dim);
    params.layers[k].b2 = Vector::Zero(hidden_dim);
    params.layers[k].epsilon = 0.0;
  }
  return params;
}

EncoderTrace encode_traced(const EncoderParams& params, const GraphBatch& batch, View view) {
  check_dims(params, batch);
  const int num_layers = params.num_layers();
  const int d = params.hidden_dim;
  const int n = batch.total_nodes();

  EncoderTrace trace;
  trace.view = view;
  trace.inputs.resize(num_layers);
  trace.agg.resize(num_layers);
  trace.z1.resize(num_layers);
  trace.r1.resize(num_layers);
  trace.z2.resize(num_layers);
  trace.norm_scale.resize(num_layers);
  trace.out.layer_nodes.resize(num_layers);

  Matrix h = batch.features;
  for (int k = 0; k < num_layers; ++k) {
    const auto& layer = params.layers[k];
    trace.inputs[k] = h;
    trace.agg[k] = aggregate(batch, view, h, layer.epsilon);
    trace.z1[k].noalias() = trace.agg[k] * layer.w1;
    trace.z1[k].rowwise() += layer.b1.transpose();
    trace.r1[k] = trace.z1[k].cwiseMax(0.0);
    trace.z2[k].noalias() = trace.r1[k] * layer.w2;
    trace.z2[k].rowwise() += layer.b2.transpose();
    h = trace.z2[k].cwiseMax(0.0);
    if (params.norm != NormKind::none) {
      h = normalize_activations(params.norm, h, trace.norm_scale[k]);
    }
    trace.out.layer_nodes[k] = h;
  }

  trace.out.node_repr.resize(n, static_cast<long>(num_layers) * d);
  for (int k = 0; k < num_layers; ++k) {
    trace.out.node_repr.middleCols(static_cast<long>(k) * d, d) = trace.out.layer_nodes[k];
  }
  trace.out.graph_repr = Matrix::Zero(batch.batch_size, static_cast<long>(num_layers) * d);
  for (int v = 0; v < n; ++v) {
    trace.out.graph_repr.row(batch.membership[v]) += trace.out.node_repr.row(v);
  }
  return trace;
}

EncoderOutput encode(const EncoderParams& params, const GraphBatch& batch, View view) {
  return encode_traced(params, batch, view).out;
}

Vector encoder_backward(const EncoderParams& params, const GraphBatch& batch,
                        const EncoderTrace& trace, const Matrix* grad_graph_repr,
                        const Matrix* grad_node_repr) {
  const int num_layers = params.num_layers();
  const int d = params.hidden_dim;
  const int n = batch.total_nodes();
  const long ld = static_cast<long>(num_layers) * d;

  if (grad_graph_repr != nullptr &&
      (grad_graph_repr->rows() != batch.batch_size || grad_graph_repr->cols() != ld)) {
    throw std::invalid_argument("encoder_backward: graph-level upstream shape mismatch");
  }
  if (grad_node_repr != nullptr &&
      (grad_node_repr->rows() != n || grad_node_repr->cols() != ld)) {
    throw std::invalid_argument("encoder_backward: node-level upstream shape mismatch");
  }

  // d loss / d H: pooled upstream broadcast back to each member node, plus
  // any direct node-level upstream.
  Matrix grad_h_total = Matrix::Zero(n, ld);
  if (grad_node_repr != nullptr) grad_h_total = *grad_node_repr;
  if (grad_graph_repr != nullptr) {
    for (int v = 0; v < n; ++v) {
      grad_h_total.row(v) += grad_graph_repr->row(batch.membership[v]);
    }
  }

  EncoderParams grads = EncoderParams::from_flat(Vector::Zero(params.flat_size()),
                                                 num_layers, params.input_dim, d);
  Matrix grad_from_above;  // d loss / d h^k via deeper layers
  for (int k = num_layers - 1; k >= 0; --k) {
    const auto& layer = params.layers[k];
    Matrix grad_hk = grad_h_total.middleCols(static_cast<long>(k) * d, d);
    if (k < num_layers - 1) grad_hk += grad_from_above;

    if (params.norm != NormKind::none) {
      grad_hk = normalize_backward(params.norm, grad_hk, trace.out.layer_nodes[k],
                                   trace.norm_scale[k]);
    }
    Matrix grad_z2 = (trace.z2[k].array() > 0.0).select(grad_hk, 0.0);
    grads.layers[k].w2.noalias() = trace.r1[k].transpose() * grad_z2;
    grads.layers[k].b2 = grad_z2.colwise().sum();
    Matrix grad_r1 = grad_z2 * layer.w2.transpose();
    Matrix grad_z1 = (trace.z1[k].array() > 0.0).select(grad_r1, 0.0);
    grads.layers[k].w1.noalias() = trace.agg[k].transpose() * grad_z1;
    grads.layers[k].b1 = grad_z1.colwise().sum();
    if (k > 0) {
      Matrix grad_agg = grad_z1 * layer.w1.transpose();
      grad_from_above = aggregate_backward(batch, trace.view, grad_agg, layer.epsilon);
    }
  }
  return grads.to_flat();
}

Vector encode_with_grad(const EncoderParams& params, const GraphBatch& batch, View view,
                        const Matrix* grad_graph_repr, const Matrix* grad_node_repr,
                        EncoderOutput* out) {
  EncoderTrace trace = encode_traced(params, batch, view);
  Vector grad = encoder_backward(params, batch, trace, grad_graph_repr, grad_node_repr);
  if (out != nullptr) *out = std::move(trace.out);
  return grad;
}

void save_params(const std::filesystem::path& path, const EncoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_params: cannot open " + path.string());
  const std::int64_t header[3] = {params.num_layers(), params.input_dim, params.hidden_dim};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  const Vector flat = params.to_flat();
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_params: write failed for " + path.string());
}

EncoderParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + path.string());
  std::int64_t header[3] = {0, 0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || header[0] < 1 || header[1] < 1 || header[2] < 1) {
    throw std::runtime_error("load_params: bad header in " + path.string());
  }
  const long n = param_count(static_cast<int>(header[0]), static_cast<int>(header[1]),
                             static_cast<int>(header[2]));
  Vector flat(n);
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("load_params: truncated file " + path.string());
  return EncoderParams::from_flat(flat, static_cast<int>(header[0]), static_cast<int>(header[1]),
                                  static_cast<int>(header[2]));
}

}  // namespace fclg
