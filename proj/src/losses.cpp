#include "fclg/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fclg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Row-stable logsumexp over finite entries (-inf marks excluded slots).
double logsumexp_row(const Eigen::RowVectorXd& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m)) return kNegInf;
  double sum = 0.0;
  for (long i = 0; i < row.size(); ++i) {
    if (std::isfinite(row(i))) sum += std::exp(row(i) - m);
  }
  return m + std::log(sum);
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
  }
}

struct CosGrad {
  double value = 0.0;
  Eigen::RowVectorXd grad_x;  // d cos / d x
};

CosGrad cosine_row(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y, const char* where) {
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) {
    throw std::runtime_error(std::string(where) + ": zero-norm embedding row (dead embedding)");
  }
  CosGrad out;
  out.value = x.dot(y) / (nx * ny);
  out.grad_x = y / (nx * ny) - (out.value / (nx * nx)) * x;
  return out;
}

LossValue inter_loss_rows(const Matrix& cur, const Matrix& frozen_global,
                          const Matrix& frozen_prev, double tau_prime, const char* where) {
  check_same_shape(cur, frozen_global, where);
  check_same_shape(cur, frozen_prev, where);
  if (!(tau_prime > 0.0)) throw std::invalid_argument(std::string(where) + ": tau' must be > 0");
  const long n = cur.rows();
  if (n == 0) throw std::invalid_argument(std::string(where) + ": empty input");

  LossValue out;
  out.grad = Matrix::Zero(cur.rows(), cur.cols());
  for (long g = 0; g < n; ++g) {
    const CosGrad to_global = cosine_row(cur.row(g), frozen_global.row(g), where);
    const CosGrad to_prev = cosine_row(cur.row(g), frozen_prev.row(g), where);
    const double a = to_prev.value / tau_prime;
    const double b = to_global.value / tau_prime;
    out.value += kd_logistic(a, b);
    // d/dx log(1 + exp(a - b)) = sigmoid(a - b) * (da/dx - db/dx)
    const double diff = a - b;
    const double sig = diff > 0.0 ? 1.0 / (1.0 + std::exp(-diff)) : std::exp(diff) / (1.0 + std::exp(diff));
    out.grad.row(g) = (sig / tau_prime) * (to_prev.grad_x - to_global.grad_x);
  }
  out.value /= static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

}  // namespace

double intra_pair_loss(const Matrix& pool, int u_index, int v_index, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("intra_pair_loss: tau must be > 0");
  if (pool.rows() < 2) throw std::invalid_argument("intra_pair_loss: pool must hold at least 2 rows");
  if (u_index < 0 || u_index >= pool.rows() || v_index < 0 || v_index >= pool.rows() ||
      u_index == v_index) {
    throw std::invalid_argument("intra_pair_loss: bad anchor/positive indices");
  }
  Eigen::RowVectorXd scores = (pool * pool.row(u_index).transpose()).transpose() / tau;
  scores(u_index) = kNegInf;
  return logsumexp_row(scores) - pool.row(u_index).dot(pool.row(v_index)) / tau;
}

PairLossValue intra_loss(const Matrix& u, const Matrix& v, double tau) {
  check_same_shape(u, v, "intra_loss");
  if (!(tau > 0.0)) throw std::invalid_argument("intra_loss: tau must be > 0");
  const long b = u.rows();
  if (b < 1) throw std::invalid_argument("intra_loss: batch must be non-empty");
  const long n = 2 * b;

  Matrix pool(n, u.cols());
  pool.topRows(b) = u;
  pool.bottomRows(b) = v;

  // Scores s_ij = p_i . p_j / tau with the diagonal excluded from every
  // anchor's negative pool. The positive of anchor i sits at i +- B.
  Matrix scores = (pool * pool.transpose()) / tau;
  scores.diagonal().setConstant(kNegInf);

  PairLossValue out;
  Matrix coeff(n, n);  // softmax weights minus the positive indicator
  for (long i = 0; i < n; ++i) {
    const long pos = (i + b) % n;
    const double lse = logsumexp_row(scores.row(i));
    out.value += lse - scores(i, pos);
    for (long z = 0; z < n; ++z) {
      coeff(i, z) = (z == i) ? 0.0 : std::exp(scores(i, z) - lse);
    }
    coeff(i, pos) -= 1.0;
  }
  out.value /= static_cast<double>(n);

  // dL/dp_r = sum_z coeff(r, z) p_z / tau  (r as anchor)
  //         + sum_i coeff(i, r) p_i / tau  (r inside other pools)
  Matrix grad_pool = ((coeff + coeff.transpose()) * pool) / (tau * static_cast<double>(n));
  out.grad_u = grad_pool.topRows(b);
  out.grad_v = grad_pool.bottomRows(b);
  return out;
}

LossValue inter_loss_graph(const Matrix& u_t, const Matrix& u_s, const Matrix& u_prev,
                           double tau_prime) {
  return inter_loss_rows(u_t, u_s, u_prev, tau_prime, "inter_loss_graph");
}

LossValue inter_loss_node(const Matrix& h_t, const Matrix& h_s, const Matrix& h_prev,
                          double tau_prime) {
  return inter_loss_rows(h_t, h_s, h_prev, tau_prime, "inter_loss_node");
}

double kd_logistic(double a, double b) {
  const double x = a - b;
  // log(1 + exp(x)) without overflow on either tail
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

LossValue kd_kl(const Matrix& u_t, const Matrix& u_s, double temperature) {
  check_same_shape(u_t, u_s, "kd_kl");
  if (!(temperature > 0.0)) throw std::invalid_argument("kd_kl: temperature must be > 0");
  const long b = u_t.rows();
  const long d = u_t.cols();
  if (b == 0) throw std::invalid_argument("kd_kl: empty input");

  LossValue out;
  out.grad = Matrix::Zero(b, d);
  for (long g = 0; g < b; ++g) {
    Eigen::RowVectorXd at = u_t.row(g) / temperature;
    Eigen::RowVectorXd as = u_s.row(g) / temperature;
    const double lt = logsumexp_row(at);
    const double ls = logsumexp_row(as);
    Eigen::RowVectorXd log_q = at.array() - lt;
    Eigen::RowVectorXd log_p = as.array() - ls;
    Eigen::RowVectorXd p = log_p.array().exp();
    Eigen::RowVectorXd q = log_q.array().exp();
    out.value += (p.array() * (log_p - log_q).array()).sum();
    out.grad.row(g) = (q - p) / temperature;
  }
  out.value /= static_cast<double>(b);
  out.grad /= static_cast<double>(b);
  return out;
}

LossValue kd_mse(const Matrix& u_t, const Matrix& u_s) {
  check_same_shape(u_t, u_s, "kd_mse");
  const long b = u_t.rows();
  if (b == 0) throw std::invalid_argument("kd_mse: empty input");
  LossValue out;
  const Matrix diff = u_t - u_s;
  out.value = diff.squaredNorm() / static_cast<double>(b);
  out.grad = 2.0 * diff / static_cast<double>(b);
  return out;
}

ParamLossValue fedprox_term(const Vector& params_flat, const Vector& global_flat, double mu) {
  if (params_flat.size() != global_flat.size()) {
    throw std::invalid_argument("fedprox_term: length mismatch");
  }
  if (mu < 0.0) throw std::invalid_argument("fedprox_term: mu must be >= 0");
  ParamLossValue out;
  const Vector diff = params_flat - global_flat;
  out.value = 0.5 * mu * diff.squaredNorm();
  out.grad = mu * diff;
  return out;
}

PairLossValue total_loss(const PairLossValue& intra, const LossValue& inter) {
  PairLossValue out = intra;
  out.value += inter.value;
  if (inter.grad.size() > 0) {
    check_same_shape(out.grad_u, inter.grad, "total_loss");
    out.grad_u += inter.grad;
  }
  return out;
}

}  // namespace fclg
