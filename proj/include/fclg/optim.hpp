#pragma once

#include "fclg/graph.hpp"

namespace fclg {

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
struct AdamWState {
  Vector m;
  Vector v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  static AdamWState create(long n, double lr, double weight_decay = 0.0);
};

/// One update in place. Throws if the gradient holds a non-finite entry,
/// naming the offending parameter index.
void adamw_step(Vector& params, const Vector& grad, AdamWState& state);

/// Plain SGD, same finiteness check.
void sgd_step(Vector& params, const Vector& grad, double lr);

}  // namespace fclg
