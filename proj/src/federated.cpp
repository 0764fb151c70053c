#include "fclg/federated.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "fclg/eval.hpp"
#include "fclg/optim.hpp"
#include "fclg/rng.hpp"

namespace fclg {

namespace {

// Stream tags for seed derivation; every purpose gets its own namespace so
// concurrency cannot reorder draws.
enum : std::uint64_t {
  kTagInit = 0x11,
  kTagSample = 0x22,
  kTagClient = 0x33,
  kTagEval = 0x44,
  kTagServer = 0x55,
};

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// Frozen per-graph representations of one shard. Model-contrast targets are
// per graph and independent of batch composition, so one deterministic pass
// per (model, shard) serves every batch lookup.
struct ShardCache {
  Matrix u;                                  // shard_size x LD
  Matrix h;                                  // stacked node rows, only when need_h
  std::unordered_map<int, long> u_row;       // graph id -> row in u
  std::unordered_map<int, long> h_base;      // graph id -> first row in h
};

ShardCache embed_shard(const EncoderParams& params, const GraphSet& set,
                       const std::vector<int>& shard, int batch_size, bool need_h) {
  ShardCache cache;
  const long ld = static_cast<long>(params.num_layers()) * params.hidden_dim;
  cache.u.resize(static_cast<long>(shard.size()), ld);
  long nodes_total = 0;
  if (need_h) {
    for (int id : shard) nodes_total += set.graphs[id].num_nodes;
    cache.h.resize(nodes_total, ld);
  }
  long u_next = 0;
  long h_next = 0;
  for (size_t start = 0; start < shard.size(); start += batch_size) {
    const size_t end = std::min(shard.size(), start + batch_size);
    const GraphBatch batch = make_batch(set, {shard.begin() + start, shard.begin() + end});
    const EncoderOutput out = encode(params, batch, View::original);
    for (int b = 0; b < batch.batch_size; ++b) {
      const int id = batch.graph_ids[b];
      cache.u_row[id] = u_next;
      cache.u.row(u_next++) = out.graph_repr.row(b);
      if (need_h) {
        const int n = batch.graph_nodes(b);
        cache.h_base[id] = h_next;
        cache.h.middleRows(h_next, n) = out.node_repr.middleRows(batch.node_offsets[b], n);
        h_next += n;
      }
    }
  }
  return cache;
}

Matrix gather_u(const ShardCache& cache, const GraphBatch& batch) {
  Matrix out(batch.batch_size, cache.u.cols());
  for (int b = 0; b < batch.batch_size; ++b) {
    out.row(b) = cache.u.row(cache.u_row.at(batch.graph_ids[b]));
  }
  return out;
}

Matrix gather_h(const ShardCache& cache, const GraphBatch& batch) {
  Matrix out(batch.total_nodes(), cache.h.cols());
  for (int b = 0; b < batch.batch_size; ++b) {
    const int n = batch.graph_nodes(b);
    out.middleRows(batch.node_offsets[b], n) =
        cache.h.middleRows(cache.h_base.at(batch.graph_ids[b]), n);
  }
  return out;
}

bool needs_global_repr(Variant v) {
  return v == Variant::fclg || v == Variant::fclg_h || v == Variant::intra_kl ||
         v == Variant::intra_mse;
}

bool needs_prev_repr(Variant v) { return v == Variant::fclg || v == Variant::fclg_h; }

bool needs_node_repr(Variant v) { return v == Variant::fclg_h; }

std::vector<int> sample_clients(int num_clients, double gamma, std::mt19937_64 rng) {
  const int take = std::max(1, static_cast<int>(std::ceil(gamma * num_clients)));
  std::vector<int> all(num_clients);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(take, num_clients));
  std::sort(all.begin(), all.end());
  return all;
}

struct ClientOutcome {
  Vector flat;
  long shard_size = 0;
  LocalTrainStats stats;
};

ClientOutcome train_one_client(int client_id, int round, const EncoderParams& global_params,
                               const FLConfig& config, const Partition& partition,
                               const GraphSet& set) {
  ClientState state;
  state.id = client_id;
  state.shard = partition.client_shards.at(client_id);
  state.rng = make_rng(config.seed, kTagClient, static_cast<std::uint64_t>(round),
                       static_cast<std::uint64_t>(client_id));
  ClientOutcome outcome;
  try {
    outcome.stats = local_train(state, global_params, config, set);
  } catch (const std::exception& e) {
    throw std::runtime_error("round " + std::to_string(round) + ", client " +
                             std::to_string(client_id) + ": " + e.what());
  }
  outcome.flat = state.params.to_flat();
  outcome.shard_size = static_cast<long>(state.shard.size());
  return outcome;
}

void maybe_checkpoint(const FLConfig& config, int round, const EncoderParams& params) {
  if (config.checkpoint_dir.empty()) return;
  std::filesystem::create_directories(config.checkpoint_dir);
  std::ostringstream name;
  name << "round_" << round << ".bin";
  save_params(std::filesystem::path(config.checkpoint_dir) / name.str(), params);
}

RoundMetrics evaluate_round(const EncoderParams& params, const GraphSet& set,
                            const FLConfig& config, int round, double intra_mean,
                            double inter_mean, double started) {
  const Matrix embeddings = embed_all(params, set, config.batch_size);
  const EvalScores scores = evaluate_embeddings(
      embeddings, set, config.kmeans_restarts,
      combine_seed(config.seed, kTagEval, static_cast<std::uint64_t>(round)));
  RoundMetrics m;
  m.round = round;
  m.intra_loss = intra_mean;
  m.inter_loss = inter_mean;
  m.accuracy = scores.accuracy;
  m.f1_macro = scores.f1_macro;
  m.wall_seconds = now_seconds() - started;
  return m;
}

void check_diffusion_ready(const GraphSet& set, const FLConfig& config) {
  if (set.diffusion_alpha != config.alpha) {
    throw std::runtime_error(
        "diffusion cache missing or built for a different alpha; call "
        "GraphSet::precompute_diffusion(config.alpha) first");
  }
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "fclg") return Variant::fclg;
  if (name == "fclg_h") return Variant::fclg_h;
  if (name == "intra_fedavg") return Variant::intra_fedavg;
  if (name == "intra_fedprox") return Variant::intra_fedprox;
  if (name == "intra_kl") return Variant::intra_kl;
  if (name == "intra_mse") return Variant::intra_mse;
  if (name == "intra_central") return Variant::intra_central;
  if (name == "vanilla_ensemble") return Variant::vanilla_ensemble;
  throw std::invalid_argument("unknown variant: " + name);
}

NormKind parse_norm(const std::string& name) {
  if (name == "none") return NormKind::none;
  if (name == "layer") return NormKind::layer;
  if (name == "batch") return NormKind::batch;
  throw std::invalid_argument("unknown norm: " + name);
}

std::string norm_name(NormKind norm) {
  switch (norm) {
    case NormKind::none: return "none";
    case NormKind::layer: return "layer";
    case NormKind::batch: return "batch";
  }
  throw std::invalid_argument("unknown norm enum value");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::fclg: return "fclg";
    case Variant::fclg_h: return "fclg_h";
    case Variant::intra_fedavg: return "intra_fedavg";
    case Variant::intra_fedprox: return "intra_fedprox";
    case Variant::intra_kl: return "intra_kl";
    case Variant::intra_mse: return "intra_mse";
    case Variant::intra_central: return "intra_central";
    case Variant::vanilla_ensemble: return "vanilla_ensemble";
  }
  throw std::invalid_argument("unknown variant enum value");
}

void FLConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("FLConfig: " + what); };
  if (rounds < 0) fail("rounds must be >= 0");
  if (local_epochs < 1) fail("local_epochs must be >= 1");
  if (clients < 1) fail("clients must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (!(tau_prime > 0.0)) fail("tau_prime must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (lr < 0.0) fail("lr must be >= 0");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (layers < 1) fail("layers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (!(kd_temperature > 0.0)) fail("kd_temperature must be > 0");
  if (mu < 0.0) fail("mu must be >= 0");
  if (server_epochs < 0) fail("server_epochs must be >= 0");
  if (kmeans_restarts < 1) fail("kmeans_restarts must be >= 1");
}

Vector fedavg_aggregate(const std::vector<std::pair<Vector, long>>& client_params) {
  if (client_params.empty()) {
    throw std::invalid_argument("fedavg_aggregate: no client parameters");
  }
  long total = 0;
  for (const auto& [flat, size] : client_params) {
    if (size <= 0) throw std::invalid_argument("fedavg_aggregate: shard sizes must be > 0");
    if (flat.size() != client_params.front().first.size()) {
      throw std::invalid_argument("fedavg_aggregate: parameter length mismatch");
    }
    total += size;
  }
  // Extended-precision accumulation so the average of identical parameter
  // vectors reproduces them exactly (constant-model invariant at lr = 0).
  const long n = client_params.front().first.size();
  std::vector<long double> acc(n, 0.0L);
  for (const auto& [flat, size] : client_params) {
    const long double weight =
        static_cast<long double>(size) / static_cast<long double>(total);
    for (long i = 0; i < n; ++i) acc[i] += weight * static_cast<long double>(flat(i));
  }
  Vector out(n);
  for (long i = 0; i < n; ++i) out(i) = static_cast<double>(acc[i]);
  return out;
}

namespace {

// Rows where the cosine is defined for all three inputs. ReLU embeddings can
// die to exactly zero during training; those samples are excluded from the
// model-contrast term for the batch (zero gradient), matching the epsilon
// semantics of the usual cosine implementations. The loss functions
// themselves keep their strict zero-norm contract.
std::vector<long> defined_cosine_rows(const Matrix& a, const Matrix& b, const Matrix& c) {
  std::vector<long> rows;
  for (long r = 0; r < a.rows(); ++r) {
    if (a.row(r).norm() > 0.0 && b.row(r).norm() > 0.0 && c.row(r).norm() > 0.0) {
      rows.push_back(r);
    }
  }
  return rows;
}

Matrix take_rows(const Matrix& m, const std::vector<long>& rows) {
  Matrix out(static_cast<long>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = m.row(rows[i]);
  return out;
}

// Intra objective under the configured similarity. For cosine, rows are
// L2-normalized before the loss and the gradient is chained back through
// the normalization; zero rows stay zero and receive no gradient.
PairLossValue intra_term(const Matrix& u, const Matrix& v, const FLConfig& config) {
  if (config.intra_similarity == IntraSimilarity::dot) {
    return intra_loss(u, v, config.tau);
  }
  auto normalize = [](const Matrix& m, Vector& norms) {
    Matrix out = m;
    norms.resize(m.rows());
    for (long r = 0; r < m.rows(); ++r) {
      norms(r) = m.row(r).norm();
      if (norms(r) > 0.0) out.row(r) /= norms(r);
    }
    return out;
  };
  Vector u_norms, v_norms;
  const Matrix un = normalize(u, u_norms);
  const Matrix vn = normalize(v, v_norms);
  PairLossValue loss = intra_loss(un, vn, config.tau);
  auto chain = [](Matrix& grad, const Matrix& normalized, const Vector& norms) {
    for (long r = 0; r < grad.rows(); ++r) {
      if (norms(r) > 0.0) {
        const double radial = grad.row(r).dot(normalized.row(r));
        grad.row(r) = (grad.row(r) - radial * normalized.row(r)) / norms(r);
      } else {
        grad.row(r).setZero();
      }
    }
  };
  chain(loss.grad_u, un, u_norms);
  chain(loss.grad_v, vn, v_norms);
  return loss;
}

// Masked inter-contrast: the mean over defined rows, scattered back.
LossValue masked_inter(const Matrix& cur, const Matrix& frozen_global, const Matrix& frozen_prev,
                       double tau_prime, bool node_level) {
  const std::vector<long> rows = defined_cosine_rows(cur, frozen_global, frozen_prev);
  LossValue out;
  out.grad = Matrix::Zero(cur.rows(), cur.cols());
  if (rows.empty()) return out;
  const Matrix mc = take_rows(cur, rows);
  const Matrix mg = take_rows(frozen_global, rows);
  const Matrix mp = take_rows(frozen_prev, rows);
  const LossValue inner = node_level ? inter_loss_node(mc, mg, mp, tau_prime)
                                     : inter_loss_graph(mc, mg, mp, tau_prime);
  out.value = inner.value;
  for (size_t i = 0; i < rows.size(); ++i) out.grad.row(rows[i]) = inner.grad.row(static_cast<long>(i));
  return out;
}

}  // namespace

VariantLoss variant_dispatch(Variant variant, const Matrix& u_t, const Matrix& v_t,
                             const Matrix& h_t, const Matrix& u_s, const Matrix& u_prev,
                             const Matrix& h_s, const Matrix& h_prev, const Vector& params_flat,
                             const Vector& global_flat, const FLConfig& config) {
  const PairLossValue intra = intra_term(u_t, v_t, config);
  VariantLoss out;
  out.intra = intra.value;
  out.grad_u = intra.grad_u;
  out.grad_v = intra.grad_v;
  switch (variant) {
    case Variant::intra_fedavg:
    case Variant::intra_central:
    case Variant::vanilla_ensemble:
      break;
    case Variant::fclg: {
      const LossValue inter = masked_inter(u_t, u_s, u_prev, config.tau_prime, false);
      out.inter = inter.value;
      out.grad_u += inter.grad;
      break;
    }
    case Variant::fclg_h: {
      const LossValue inter = masked_inter(h_t, h_s, h_prev, config.tau_prime, true);
      out.inter = inter.value;
      out.grad_h = inter.grad;
      break;
    }
    case Variant::intra_fedprox: {
      const ParamLossValue prox = fedprox_term(params_flat, global_flat, config.mu);
      out.inter = prox.value;
      out.grad_params = prox.grad;
      break;
    }
    case Variant::intra_kl: {
      const LossValue kd = kd_kl(u_t, u_s, config.kd_temperature);
      out.inter = kd.value;
      out.grad_u += kd.grad;
      break;
    }
    case Variant::intra_mse: {
      const LossValue kd = kd_mse(u_t, u_s);
      out.inter = kd.value;
      out.grad_u += kd.grad;
      break;
    }
  }
  return out;
}

LocalTrainStats local_train(ClientState& client, const EncoderParams& global_params,
                            const FLConfig& config, const GraphSet& set) {
  if (client.shard.empty()) throw std::invalid_argument("local_train: empty client shard");
  check_diffusion_ready(set, config);

  const bool want_global = needs_global_repr(config.variant);
  const bool want_prev = needs_prev_repr(config.variant);
  const bool want_nodes = needs_node_repr(config.variant);
  const bool want_prox = config.variant == Variant::intra_fedprox;

  client.params = global_params;
  client.snapshot = global_params;

  Vector flat = client.params.to_flat();
  Vector global_flat;
  if (want_prox) global_flat = global_params.to_flat();

  AdamWState adamw = AdamWState::create(flat.size(), config.lr, config.weight_decay);

  // Without batch-coupled normalization a graph's frozen representation is
  // independent of batch composition, so one pass per (model, shard) serves
  // every batch lookup. Batch normalization voids that; the frozen models
  // then encode each batch directly.
  const bool batch_coupled = config.norm == NormKind::batch;
  ShardCache global_cache;
  if (want_global && !batch_coupled) {
    global_cache = embed_shard(global_params, set, client.shard, config.batch_size, want_nodes);
  }

  LocalTrainStats stats;
  for (int epoch = 1; epoch <= config.local_epochs; ++epoch) {
    // U_c^{t-1}: frozen pass under the snapshot that ended epoch t-1; at
    // t = 1 the snapshot IS the received global model, so its cache is reused.
    ShardCache prev_cache;
    const ShardCache* prev = nullptr;
    if (want_prev && !batch_coupled) {
      if (epoch == 1) {
        prev = &global_cache;
      } else {
        prev_cache = embed_shard(client.snapshot, set, client.shard, config.batch_size, want_nodes);
        prev = &prev_cache;
      }
    }

    const auto batches = make_batches(set, client.shard, config.batch_size, client.rng);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const GraphBatch& batch = batches[bi];
      const EncoderTrace trace_orig = encode_traced(client.params, batch, View::original);
      const EncoderTrace trace_diff = encode_traced(client.params, batch, View::diffused);

      Matrix u_s, u_prev, h_s, h_prev;
      if (batch_coupled) {
        if (want_global) {
          const EncoderOutput out_s = encode(global_params, batch, View::original);
          u_s = out_s.graph_repr;
          if (want_nodes) h_s = out_s.node_repr;
        }
        if (want_prev) {
          if (epoch == 1) {
            u_prev = u_s;  // snapshot == received global model at t = 1
            if (want_nodes) h_prev = h_s;
          } else {
            const EncoderOutput out_p = encode(client.snapshot, batch, View::original);
            u_prev = out_p.graph_repr;
            if (want_nodes) h_prev = out_p.node_repr;
          }
        }
      } else {
        if (want_global) u_s = gather_u(global_cache, batch);
        if (want_prev) u_prev = gather_u(*prev, batch);
        if (want_nodes) {
          h_s = gather_h(global_cache, batch);
          h_prev = gather_h(*prev, batch);
        }
      }

      const VariantLoss loss =
          variant_dispatch(config.variant, trace_orig.out.graph_repr, trace_diff.out.graph_repr,
                           trace_orig.out.node_repr, u_s, u_prev, h_s, h_prev, flat, global_flat,
                           config);
      if (!std::isfinite(loss.intra) || !std::isfinite(loss.inter)) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(bi) + ": non-finite loss");
      }
      stats.intra_sum += loss.intra;
      stats.inter_sum += loss.inter;
      stats.steps += 1;

      Vector grad = encoder_backward(client.params, batch, trace_orig, &loss.grad_u,
                                     loss.grad_h.size() > 0 ? &loss.grad_h : nullptr);
      grad += encoder_backward(client.params, batch, trace_diff, &loss.grad_v, nullptr);
      if (loss.grad_params.size() > 0) grad += loss.grad_params;

      if (config.optimizer == OptimizerKind::adamw) {
        adamw_step(flat, grad, adamw);
      } else {
        sgd_step(flat, grad, config.lr);
      }
      client.params.set_flat(flat);
    }
    client.snapshot = client.params;
  }
  return stats;
}

Matrix embed_all(const EncoderParams& params, const GraphSet& set, int batch_size) {
  const long ld = static_cast<long>(params.num_layers()) * params.hidden_dim;
  Matrix embeddings(set.size(), ld);
  std::vector<int> ids(set.size());
  std::iota(ids.begin(), ids.end(), 0);
  long row = 0;
  for (size_t start = 0; start < ids.size(); start += batch_size) {
    const size_t end = std::min(ids.size(), start + batch_size);
    const GraphBatch batch = make_batch(set, {ids.begin() + start, ids.begin() + end});
    const EncoderOutput out = encode(params, batch, View::original);
    embeddings.middleRows(row, batch.batch_size) = out.graph_repr;
    row += batch.batch_size;
  }
  return embeddings;
}

EvalScores evaluate_embeddings(const Matrix& embeddings, const GraphSet& set, int restarts,
                               std::uint64_t seed) {
  ClusteringResult clusters = kmeans(embeddings, set.num_classes, restarts, seed);
  const std::vector<int> labels = set.labels();
  EvalScores scores;
  scores.accuracy =
      clustering_accuracy(clusters.assignments, labels, set.num_classes, set.num_classes, &clusters);
  scores.f1_macro = macro_f1(clusters.assignments, clusters.cluster_to_class, labels, set.num_classes);
  return scores;
}

FederatedResult run_federated(const FLConfig& config, const Partition& partition,
                              const GraphSet& set) {
  config.validate();
  if (partition.num_clients() != config.clients) {
    throw std::invalid_argument("run_federated: partition has " +
                                std::to_string(partition.num_clients()) + " clients, config says " +
                                std::to_string(config.clients));
  }
  if (config.rounds > 0) check_diffusion_ready(set, config);

  auto init_rng = make_rng(config.seed, kTagInit);
  EncoderParams params = init_params(config.layers, set.feature_dim, config.hidden, init_rng);
  int start_round = 0;
  if (config.resume_round >= 0) {
    std::ostringstream name;
    name << "round_" << config.resume_round << ".bin";
    params = load_params(std::filesystem::path(config.checkpoint_dir) / name.str());
    start_round = config.resume_round + 1;
  }
  params.norm = config.norm;

  FederatedResult result;
  for (int round = start_round; round < config.rounds; ++round) {
    const double started = now_seconds();
    const auto participants = sample_clients(
        config.clients, config.gamma,
        make_rng(config.seed, kTagSample, static_cast<std::uint64_t>(round)));

    std::vector<ClientOutcome> outcomes(participants.size());
    if (config.concurrent_clients) {
      std::vector<std::future<ClientOutcome>> futures;
      futures.reserve(participants.size());
      for (int id : participants) {
        futures.push_back(std::async(std::launch::async, train_one_client, id, round,
                                     std::cref(params), std::cref(config), std::cref(partition),
                                     std::cref(set)));
      }
      for (size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
    } else {
      for (size_t i = 0; i < participants.size(); ++i) {
        outcomes[i] = train_one_client(participants[i], round, params, config, partition, set);
      }
    }

    std::vector<std::pair<Vector, long>> weighted;
    weighted.reserve(outcomes.size());
    double intra_sum = 0.0, inter_sum = 0.0;
    long steps = 0;
    for (auto& o : outcomes) {
      weighted.emplace_back(std::move(o.flat), o.shard_size);
      intra_sum += o.stats.intra_sum;
      inter_sum += o.stats.inter_sum;
      steps += o.stats.steps;
    }
    params.set_flat(fedavg_aggregate(weighted));

    result.rounds.push_back(evaluate_round(params, set, config, round,
                                           steps > 0 ? intra_sum / steps : 0.0,
                                           steps > 0 ? inter_sum / steps : 0.0, started));
    maybe_checkpoint(config, round, params);
  }
  result.model = std::move(params);
  return result;
}

FederatedResult run_intra_central(const FLConfig& config, const GraphSet& set) {
  config.validate();
  if (config.rounds > 0) check_diffusion_ready(set, config);

  auto init_rng = make_rng(config.seed, kTagInit);
  EncoderParams params = init_params(config.layers, set.feature_dim, config.hidden, init_rng);
  params.norm = config.norm;
  Vector flat = params.to_flat();

  std::vector<int> everything(set.size());
  std::iota(everything.begin(), everything.end(), 0);

  FederatedResult result;
  // One "round" is a block of E epochs, mirroring a federated client's
  // schedule so trajectories stay comparable (and bitwise equal at K = 1).
  for (int round = 0; round < config.rounds; ++round) {
    const double started = now_seconds();
    auto rng = make_rng(config.seed, kTagClient, static_cast<std::uint64_t>(round),
                        static_cast<std::uint64_t>(0));
    AdamWState adamw = AdamWState::create(flat.size(), config.lr, config.weight_decay);
    double intra_sum = 0.0;
    long steps = 0;
    for (int epoch = 1; epoch <= config.local_epochs; ++epoch) {
      const auto batches = make_batches(set, everything, config.batch_size, rng);
      for (size_t bi = 0; bi < batches.size(); ++bi) {
        const GraphBatch& batch = batches[bi];
        const EncoderTrace trace_orig = encode_traced(params, batch, View::original);
        const EncoderTrace trace_diff = encode_traced(params, batch, View::diffused);
        const PairLossValue intra =
            intra_term(trace_orig.out.graph_repr, trace_diff.out.graph_repr, config);
        if (!std::isfinite(intra.value)) {
          throw std::runtime_error("round " + std::to_string(round) + ", epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(bi) +
                                   ": non-finite loss");
        }
        intra_sum += intra.value;
        ++steps;
        Vector grad = encoder_backward(params, batch, trace_orig, &intra.grad_u, nullptr);
        grad += encoder_backward(params, batch, trace_diff, &intra.grad_v, nullptr);
        if (config.optimizer == OptimizerKind::adamw) {
          adamw_step(flat, grad, adamw);
        } else {
          sgd_step(flat, grad, config.lr);
        }
        params.set_flat(flat);
      }
    }
    result.rounds.push_back(evaluate_round(params, set, config, round,
                                           steps > 0 ? intra_sum / steps : 0.0, 0.0, started));
    maybe_checkpoint(config, round, params);
  }
  result.model = std::move(params);
  return result;
}

FederatedResult run_vanilla_ensemble(const FLConfig& config, const Partition& partition,
                                     const GraphSet& set) {
  config.validate();
  if (partition.server_shard.empty()) {
    throw std::invalid_argument("run_vanilla_ensemble: partition has no server shard");
  }
  if (partition.num_clients() != config.clients) {
    throw std::invalid_argument("run_vanilla_ensemble: client count mismatch");
  }
  if (config.rounds > 0) check_diffusion_ready(set, config);

  auto init_rng = make_rng(config.seed, kTagInit);
  EncoderParams params = init_params(config.layers, set.feature_dim, config.hidden, init_rng);
  params.norm = config.norm;

  FederatedResult result;
  for (int round = 0; round < config.rounds; ++round) {
    const double started = now_seconds();
    const auto participants = sample_clients(
        config.clients, config.gamma,
        make_rng(config.seed, kTagSample, static_cast<std::uint64_t>(round)));

    std::vector<std::pair<Vector, long>> weighted;
    double intra_sum = 0.0;
    long steps = 0;
    for (int id : participants) {
      ClientOutcome o = train_one_client(id, round, params, config, partition, set);
      intra_sum += o.stats.intra_sum;
      steps += o.stats.steps;
      weighted.emplace_back(std::move(o.flat), o.shard_size);
    }
    Vector flat = fedavg_aggregate(weighted);
    params.set_flat(flat);

    // Server-side intra pass on its own shard before broadcasting.
    auto server_rng = make_rng(config.seed, kTagServer, static_cast<std::uint64_t>(round));
    AdamWState adamw = AdamWState::create(flat.size(), config.lr, config.weight_decay);
    for (int epoch = 1; epoch <= config.server_epochs; ++epoch) {
      const auto batches = make_batches(set, partition.server_shard, config.batch_size, server_rng);
      for (const GraphBatch& batch : batches) {
        const EncoderTrace trace_orig = encode_traced(params, batch, View::original);
        const EncoderTrace trace_diff = encode_traced(params, batch, View::diffused);
        const PairLossValue intra =
            intra_term(trace_orig.out.graph_repr, trace_diff.out.graph_repr, config);
        Vector grad = encoder_backward(params, batch, trace_orig, &intra.grad_u, nullptr);
        grad += encoder_backward(params, batch, trace_diff, &intra.grad_v, nullptr);
        if (config.optimizer == OptimizerKind::adamw) {
          adamw_step(flat, grad, adamw);
        } else {
          sgd_step(flat, grad, config.lr);
        }
        params.set_flat(flat);
      }
    }

    result.rounds.push_back(evaluate_round(params, set, config, round,
                                           steps > 0 ? intra_sum / steps : 0.0, 0.0, started));
    maybe_checkpoint(config, round, params);
  }
  result.model = std::move(params);
  return result;
}

}  // namespace fclg
