#include "fclg/diffusion.hpp"

#include <Eigen/Cholesky>
#include <stdexcept>

namespace fclg {

Matrix normalize_adjacency(const Graph& g) {
  const int n = g.num_nodes;
  Matrix a = Matrix::Identity(n, n);  // self-loops up front
  for (const auto& [u, v] : g.edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  Vector inv_sqrt_deg(n);
  for (int i = 0; i < n; ++i) {
    inv_sqrt_deg(i) = 1.0 / std::sqrt(a.row(i).sum());
  }
  return inv_sqrt_deg.asDiagonal() * a * inv_sqrt_deg.asDiagonal();
}

DiffusionMatrix ppr_diffusion(const Graph& g, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("ppr_diffusion: alpha must lie in (0, 1)");
  }
  const int n = g.num_nodes;
  const Matrix t = normalize_adjacency(g);
  // I - (1 - alpha) T is symmetric positive definite for alpha in (0, 1).
  Matrix system = Matrix::Identity(n, n) - (1.0 - alpha) * t;
  Eigen::LDLT<Matrix> solver(system);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("ppr_diffusion: dense solve failed");
  }
  Matrix s = alpha * solver.solve(Matrix::Identity(n, n));
  // The exact result is symmetric with non-negative entries; scrub the
  // solver's rounding noise so downstream invariants hold exactly.
  s = ((s + s.transpose()) * 0.5).eval();
  s = s.cwiseMax(0.0);
  if (!s.allFinite()) {
    throw std::runtime_error("ppr_diffusion: non-finite diffusion entries");
  }
  return DiffusionMatrix{std::move(s), alpha};
}

}  // namespace fclg
