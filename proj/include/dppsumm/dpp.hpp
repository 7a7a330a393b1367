#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dppsumm/errors.hpp"
#include "dppsumm/kernel.hpp"
#include "dppsumm/rng.hpp"

namespace dppsumm {

struct Spectrum {
  Eigen::VectorXd eigenvalues;   // non-increasing, >= -1e-8
  Eigen::MatrixXd eigenvectors;  // orthonormal columns aligned to eigenvalues
  std::vector<std::string> item_ids;
};

enum class SelectionStrategy { dpp_exact, kdpp, greedy_map, uniform, llm, all };

inline std::string selection_strategy_name(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::dpp_exact: return "dpp_exact";
    case SelectionStrategy::kdpp: return "kdpp";
    case SelectionStrategy::greedy_map: return "greedy_map";
    case SelectionStrategy::uniform: return "uniform";
    case SelectionStrategy::llm: return "llm";
    case SelectionStrategy::all: return "all";
  }
  throw ValidationError("unknown selection strategy");
}

struct SelectionResult {
  std::vector<std::string> selected_ids;
  SelectionStrategy strategy = SelectionStrategy::dpp_exact;
  std::uint64_t seed = 0;
  std::optional<KernelConfig> kernel_config;
  std::optional<double> log_det;
};

inline Spectrum eigendecompose(const KernelMatrix& kernel) {
  kernel.check_shape();
  if (!kernel.entries.allFinite()) throw NumericError("eigendecompose: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(kernel.entries);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecompose: no convergence (n=" + std::to_string(kernel.n) +
                       ", max|L|=" + std::to_string(kernel.entries.cwiseAbs().maxCoeff()) + ")");
  }
  // Eigen returns ascending order; the spectrum contract is non-increasing.
  Spectrum spec;
  spec.item_ids = kernel.item_ids;
  spec.eigenvalues = solver.eigenvalues().reverse();
  spec.eigenvectors = solver.eigenvectors().rowwise().reverse();

  const int n = kernel.n;
  double min_eval = spec.eigenvalues(n - 1);
  if (min_eval < -1e-8) {
    throw NumericError("eigendecompose: kernel not PSD (min eigenvalue " +
                       std::to_string(min_eval) + "); run psd_project first");
  }
  double ortho = (spec.eigenvectors.transpose() * spec.eigenvectors -
                  Eigen::MatrixXd::Identity(n, n))
                     .cwiseAbs()
                     .maxCoeff();
  if (ortho > 1e-8) {
    throw NumericError("eigendecompose: eigenvector orthonormality residual " +
                       std::to_string(ortho));
  }
  double scale = std::max(1.0, kernel.entries.cwiseAbs().maxCoeff());
  double recon = (spec.eigenvectors * spec.eigenvalues.asDiagonal() *
                      spec.eigenvectors.transpose() -
                  kernel.entries)
                     .cwiseAbs()
                     .maxCoeff();
  if (recon > 1e-6 * scale) {
    throw NumericError("eigendecompose: reconstruction residual " + std::to_string(recon));
  }
  return spec;
}

inline double expected_cardinality(const Spectrum& spectrum) {
  double sum = 0.0;
  for (int i = 0; i < spectrum.eigenvalues.size(); ++i) {
    double lam = std::max(0.0, spectrum.eigenvalues(i));
    sum += lam / (1.0 + lam);
  }
  return sum;
}

namespace detail {

// Phase 2 of the spectral sampler. V holds an orthonormal basis (columns) of
// the chosen eigenvector span; each round picks item j with probability
// (1/|V|) sum_v v_j^2, then V is replaced by an orthonormal basis of the part
// of span(V) orthogonal to coordinate axis j, shrinking by one column.
inline std::vector<int> sample_items_from_basis(Eigen::MatrixXd V, SplitMix64& rng) {
  std::vector<int> selected;
  const int n = static_cast<int>(V.rows());
  while (V.cols() > 0) {
    const int m = static_cast<int>(V.cols());
    // Row norms of V give the item distribution; total mass is exactly m.
    Eigen::VectorXd weights = V.rowwise().squaredNorm();
    double total = weights.sum();
    double u = rng.next_double() * total;
    int j = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += weights(i);
      if (u < acc) {
        j = i;
        break;
      }
    }
    selected.push_back(j);

    if (m == 1) break;

    // Pivot on the column with the largest |V(j, c)|, eliminate coordinate j
    // from the others, then re-orthonormalize the remaining m-1 columns by
    // modified Gram-Schmidt.
    int pivot = 0;
    double best = -1.0;
    for (int c = 0; c < m; ++c) {
      if (std::abs(V(j, c)) > best) {
        best = std::abs(V(j, c));
        pivot = c;
      }
    }
    if (best < 1e-12) {
      throw NumericError("dpp sampler: selected item has no support in basis");
    }
    V.col(pivot).swap(V.col(m - 1));
    Eigen::VectorXd p = V.col(m - 1) / V(j, m - 1);
    Eigen::MatrixXd W = V.leftCols(m - 1);
    for (int c = 0; c < m - 1; ++c) W.col(c) -= p * W(j, c);

    for (int c = 0; c < m - 1; ++c) {
      for (int prev = 0; prev < c; ++prev) {
        W.col(c) -= W.col(prev).dot(W.col(c)) * W.col(prev);
      }
      double norm = W.col(c).norm();
      if (norm < 1e-10) {
        // Lost precision; re-orthogonalize once against all previous columns.
        for (int prev = 0; prev < c; ++prev) {
          W.col(c) -= W.col(prev).dot(W.col(c)) * W.col(prev);
        }
        norm = W.col(c).norm();
      }
      if (norm == 0.0) throw NumericError("dpp sampler: basis column collapsed to zero");
      W.col(c) /= norm;
    }
    double ortho = (W.transpose() * W - Eigen::MatrixXd::Identity(m - 1, m - 1))
                       .cwiseAbs()
                       .maxCoeff();
    if (ortho > 1e-6) {
      throw NumericError("dpp sampler: orthogonalization residual " + std::to_string(ortho));
    }
    V = std::move(W);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

inline std::vector<std::string> ids_for(const std::vector<int>& idx,
                                        const std::vector<std::string>& item_ids) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(item_ids[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

// Exact spectral sampling: eigenindex i joins the basis independently with
// probability lambda_i / (1 + lambda_i), then items are drawn from the basis.
// The subset size varies per draw.
inline SelectionResult sample_exact(const Spectrum& spectrum, std::uint64_t seed) {
  const int n = static_cast<int>(spectrum.eigenvalues.size());
  SplitMix64 rng(seed);
  std::vector<int> chosen_eigs;
  for (int i = 0; i < n; ++i) {
    double lam = std::max(0.0, spectrum.eigenvalues(i));
    if (rng.next_bernoulli(lam / (1.0 + lam))) chosen_eigs.push_back(i);
  }
  SelectionResult result;
  result.strategy = SelectionStrategy::dpp_exact;
  result.seed = seed;
  if (chosen_eigs.empty()) return result;

  Eigen::MatrixXd V(n, chosen_eigs.size());
  for (std::size_t c = 0; c < chosen_eigs.size(); ++c) {
    V.col(static_cast<int>(c)) = spectrum.eigenvectors.col(chosen_eigs[c]);
  }
  result.selected_ids = detail::ids_for(detail::sample_items_from_basis(std::move(V), rng),
                                        spectrum.item_ids);
  return result;
}

// Eigenvalue-selection phase of the k-DPP: elementary symmetric polynomials
// E[l][j] over the first j eigenvalues drive the inclusion marginals. The
// distribution is invariant under rescaling L, so eigenvalues are divided by
// the largest one to keep E finite for any n.
inline SelectionResult sample_kdpp(const Spectrum& spectrum, int k, std::uint64_t seed) {
  const int n = static_cast<int>(spectrum.eigenvalues.size());
  std::vector<double> lambda(static_cast<std::size_t>(n));
  int rank = 0;
  double max_lam = 0.0;
  for (int i = 0; i < n; ++i) {
    lambda[static_cast<std::size_t>(i)] = std::max(0.0, spectrum.eigenvalues(i));
    max_lam = std::max(max_lam, lambda[static_cast<std::size_t>(i)]);
    if (lambda[static_cast<std::size_t>(i)] > 1e-10) ++rank;
  }
  if (k < 1) throw ValidationError("sample_kdpp: k must be at least 1");
  if (k > rank) {
    throw ValidationError("sample_kdpp: k=" + std::to_string(k) + " exceeds kernel rank " +
                          std::to_string(rank));
  }
  for (auto& l : lambda) l /= max_lam;

  // E[l][j] = sum of products of l distinct rescaled eigenvalues among the
  // first j. Recurrence: E[l][j] = E[l][j-1] + lambda_j * E[l-1][j-1].
  std::vector<std::vector<double>> E(static_cast<std::size_t>(k + 1),
                                     std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  for (int j = 0; j <= n; ++j) E[0][static_cast<std::size_t>(j)] = 1.0;
  for (int l = 1; l <= k; ++l) {
    for (int j = 1; j <= n; ++j) {
      E[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)] =
          E[static_cast<std::size_t>(l)][static_cast<std::size_t>(j - 1)] +
          lambda[static_cast<std::size_t>(j - 1)] *
              E[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j - 1)];
    }
  }

  SplitMix64 rng(seed);
  std::vector<int> chosen_eigs;
  int l = k;
  for (int j = n; j >= 1 && l > 0; --j) {
    // Remaining eigenvalues exactly fill the quota: all must be taken.
    if (j == l) {
      for (int i = j; i >= 1; --i) chosen_eigs.push_back(i - 1);
      l = 0;
      break;
    }
    double denom = E[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
    if (denom <= 0.0) {
      throw NumericError("sample_kdpp: degenerate symmetric polynomial at j=" +
                         std::to_string(j));
    }
    double marginal = lambda[static_cast<std::size_t>(j - 1)] *
                      E[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j - 1)] / denom;
    if (rng.next_bernoulli(marginal)) {
      chosen_eigs.push_back(j - 1);
      --l;
    }
  }
  std::sort(chosen_eigs.begin(), chosen_eigs.end());

  Eigen::MatrixXd V(n, chosen_eigs.size());
  for (std::size_t c = 0; c < chosen_eigs.size(); ++c) {
    V.col(static_cast<int>(c)) = spectrum.eigenvectors.col(chosen_eigs[c]);
  }
  SelectionResult result;
  result.strategy = SelectionStrategy::kdpp;
  result.seed = seed;
  result.selected_ids = detail::ids_for(detail::sample_items_from_basis(std::move(V), rng),
                                        spectrum.item_ids);
  if (static_cast<int>(result.selected_ids.size()) != k) {
    throw NumericError("sample_kdpp: drew " + std::to_string(result.selected_ids.size()) +
                       " items, expected " + std::to_string(k));
  }
  return result;
}

// Greedy MAP with incremental Cholesky-style updates. Per item j the marginal
// gain of adding it is d_j^2 = L_jj - ||c_j||^2, the factor det grows by d_j^2;
// iteration stops once every gain is <= 1 (log-det gain <= 0). Ties take the
// lowest index so results are reproducible.
inline SelectionResult map_greedy(const KernelMatrix& kernel,
                                  std::optional<int> max_size = std::nullopt) {
  kernel.check_shape();
  const int n = kernel.n;
  const auto& L = kernel.entries;
  const int cap = max_size ? std::min(*max_size, n) : n;

  Eigen::VectorXd d2 = L.diagonal();
  Eigen::MatrixXd c(n, cap > 0 ? cap : 1);  // c(j, t) = t-th Cholesky coefficient of item j
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::vector<int> order;
  double log_det = 0.0;

  while (static_cast<int>(order.size()) < cap) {
    int best = -1;
    double best_gain = 1.0;  // strict: a gain of exactly 1 never enters
    for (int j = 0; j < n; ++j) {
      if (!taken[static_cast<std::size_t>(j)] && d2(j) > best_gain) {
        best_gain = d2(j);
        best = j;
      }
    }
    if (best < 0) break;

    const int t = static_cast<int>(order.size());
    double root = std::sqrt(best_gain);
    // New Cholesky column: e_j = (L(j, best) - <c_j, c_best>) / root.
    for (int j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)] || j == best) continue;
      double dot = 0.0;
      for (int s = 0; s < t; ++s) dot += c(j, s) * c(best, s);
      double e = (L(j, best) - dot) / root;
      c(j, t) = e;
      d2(j) -= e * e;
    }
    c(best, t) = root;
    taken[static_cast<std::size_t>(best)] = true;
    order.push_back(best);
    log_det += std::log(best_gain);
  }

  SelectionResult result;
  result.strategy = SelectionStrategy::greedy_map;
  result.selected_ids = detail::ids_for(order, kernel.item_ids);
  result.log_det = order.empty() ? 0.0 : log_det;
  return result;
}

// Uniform k-subset without replacement (partial Fisher-Yates on indices).
inline SelectionResult sample_uniform(const std::vector<std::string>& item_ids, int k,
                                      std::uint64_t seed) {
  const int n = static_cast<int>(item_ids.size());
  if (k < 1) throw ValidationError("sample_uniform: k must be at least 1");
  if (k > n) {
    throw ValidationError("sample_uniform: k=" + std::to_string(k) + " exceeds item count " +
                          std::to_string(n));
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  SplitMix64 rng(seed);
  for (int i = 0; i < k; ++i) {
    auto j = i + static_cast<int>(rng.next_index(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<int> picked(idx.begin(), idx.begin() + k);
  std::sort(picked.begin(), picked.end());
  SelectionResult result;
  result.strategy = SelectionStrategy::uniform;
  result.seed = seed;
  result.selected_ids = detail::ids_for(picked, item_ids);
  return result;
}

// Oracle: log P(Y) = log det(L_Y) - log det(L + I), computed by plain
// determinant routines with no spectral machinery shared with the samplers.
// A non-positive det(L_Y) (singular or numerically negative) maps to -inf.
inline double subset_log_probability(const KernelMatrix& kernel, const std::vector<int>& subset) {
  kernel.check_shape();
  const int n = kernel.n;
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int i : subset) {
    if (i < 0 || i >= n) throw ValidationError("subset_log_probability: index out of range");
    if (seen[static_cast<std::size_t>(i)]) {
      throw ValidationError("subset_log_probability: duplicate index " + std::to_string(i));
    }
    seen[static_cast<std::size_t>(i)] = true;
  }

  Eigen::MatrixXd LI = kernel.entries + Eigen::MatrixXd::Identity(n, n);
  // L + I is symmetric positive definite for PSD L, so Cholesky applies.
  Eigen::LLT<Eigen::MatrixXd> llt(LI);
  if (llt.info() != Eigen::Success) {
    throw NumericError("subset_log_probability: L + I not positive definite");
  }
  double log_norm = 0.0;
  for (int i = 0; i < n; ++i) log_norm += 2.0 * std::log(llt.matrixL()(i, i));

  if (subset.empty()) return -log_norm;

  Eigen::MatrixXd LY(subset.size(), subset.size());
  for (std::size_t a = 0; a < subset.size(); ++a) {
    for (std::size_t b = 0; b < subset.size(); ++b) {
      LY(static_cast<int>(a), static_cast<int>(b)) = kernel.entries(subset[a], subset[b]);
    }
  }
  double det = Eigen::FullPivLU<Eigen::MatrixXd>(LY).determinant();
  if (det <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(det) - log_norm;
}

}  // namespace dppsumm
