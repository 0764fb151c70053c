#include "fclg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fclg {

namespace {

void check_finite(const Vector& grad) {
  for (long i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad(i))) {
      throw std::runtime_error("non-finite gradient at parameter index " + std::to_string(i));
    }
  }
}

}  // namespace

AdamWState AdamWState::create(long n, double lr, double weight_decay) {
  AdamWState state;
  state.m = Vector::Zero(n);
  state.v = Vector::Zero(n);
  state.lr = lr;
  state.weight_decay = weight_decay;
  return state;
}

void adamw_step(Vector& params, const Vector& grad, AdamWState& state) {
  if (params.size() != grad.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adamw_step: length mismatch");
  }
  check_finite(grad);
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const Vector m_hat = state.m / bias1;
  const Vector v_hat = state.v / bias2;
  params -= state.lr * (m_hat.array() / (v_hat.array().sqrt() + state.eps) +
                        state.weight_decay * params.array())
                .matrix();
}

void sgd_step(Vector& params, const Vector& grad, double lr) {
  if (params.size() != grad.size()) {
    throw std::invalid_argument("sgd_step: length mismatch");
  }
  check_finite(grad);
  params -= lr * grad;
}

}  // namespace fclg
