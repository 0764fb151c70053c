#pragma once

#include "fclg/graph.hpp"

namespace fclg {

/// Loss value with the gradient wrt one trainable representation matrix.
/// Gradients wrt frozen inputs are identically zero and never materialized.
struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Intra-contrast loss with gradients wrt both views (both are functions of
/// the current local model).
struct PairLossValue {
  double value = 0.0;
  Matrix grad_u;
  Matrix grad_v;
};

/// Parameter-space loss (FedProx proximal term).
struct ParamLossValue {
  double value = 0.0;
  Vector grad;
};

/// NT-Xent pairwise term. `pool` stacks all rows of U and V; `u_index`
/// anchors the loss and `v_index` is its only positive:
///   L(u, v) = logsumexp_{z != u}(u.z / tau) - u.v / tau
/// Dot products are raw inner products; log-sum-exp uses max-subtraction.
double intra_pair_loss(const Matrix& pool, int u_index, int v_index, double tau);

/// l_intra = (1 / 2B) * sum_u [L(u, v) + L(v, u)].
PairLossValue intra_loss(const Matrix& u, const Matrix& v, double tau);

/// Model-level contrast on graph embeddings, per row g:
///   log( (exp(cos(u_t, u_s)/tau') + exp(cos(u_t, u_prev)/tau')) / exp(cos(u_t, u_s)/tau') )
/// averaged over rows; u_s and u_prev are frozen. Throws on a zero-norm row
/// (dead embedding).
LossValue inter_loss_graph(const Matrix& u_t, const Matrix& u_s, const Matrix& u_prev,
                           double tau_prime);

/// Node-level counterpart: same expression per node row, mean over all nodes.
LossValue inter_loss_node(const Matrix& h_t, const Matrix& h_s, const Matrix& h_prev,
                          double tau_prime);

/// log(1 + exp(a - b)), overflow-safe.
double kd_logistic(double a, double b);

/// Per row: p = softmax(u_s / temperature), q = softmax(u_t / temperature),
/// KL(p || q) summed over dimensions, mean over rows. Gradient wrt u_t only.
LossValue kd_kl(const Matrix& u_t, const Matrix& u_s, double temperature);

/// Mean over rows of the squared row distance ||u_t[g] - u_s[g]||^2.
LossValue kd_mse(const Matrix& u_t, const Matrix& u_s);

/// (mu / 2) * ||theta - theta_global||^2 with gradient mu * (theta - theta_global).
ParamLossValue fedprox_term(const Vector& params_flat, const Vector& global_flat, double mu);

/// l_tot = l_inter + l_intra; gradients summed where they share a shape.
PairLossValue total_loss(const PairLossValue& intra, const LossValue& inter);

}  // namespace fclg
