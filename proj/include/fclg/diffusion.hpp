#pragma once

#include "fclg/graph.hpp"

namespace fclg {

/// Personalized-PageRank diffusion of one graph.
struct DiffusionMatrix {
  Matrix S;      // n x n, symmetric, entrywise >= 0
  double alpha;  // teleport probability in (0, 1)
};

/// T = D^{-1/2} (A + I) D^{-1/2} with self-loops added; D is the degree
/// matrix of A + I. Self-loops guarantee positive degrees, so T is always
/// defined and symmetric.
Matrix normalize_adjacency(const Graph& g);

/// S = alpha * (I - (1 - alpha) * T)^{-1}, computed by an exact dense
/// symmetric solve. Valid for alpha in (0, 1): the spectral radius of
/// (1 - alpha) T is below 1, so the system is positive definite.
DiffusionMatrix ppr_diffusion(const Graph& g, double alpha);

}  // namespace fclg
