#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dppsumm/errors.hpp"

namespace dppsumm {

enum class KernelFamily { gaussian, linear };

inline std::string kernel_family_name(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "linear";
}

inline KernelFamily kernel_family_from_name(const std::string& name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "linear") return KernelFamily::linear;
  throw ValidationError("unknown kernel family '" + name + "'");
}

struct KernelConfig {
  KernelFamily family = KernelFamily::gaussian;
  double sigma = 1.0;        // gaussian bandwidth; ablation values 0.1, 1, 10
  double psd_epsilon = 0.0;  // eigenvalue clamp floor

  void validate() const {
    if (!(sigma > 0.0)) throw ValidationError("kernel sigma must be positive");
    if (psd_epsilon < 0.0) throw ValidationError("kernel psd_epsilon must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const KernelConfig& c) {
  j = {{"family", kernel_family_name(c.family)},
       {"sigma", c.sigma},
       {"psd_epsilon", c.psd_epsilon}};
}

inline void from_json(const nlohmann::json& j, KernelConfig& c) {
  c.family = kernel_family_from_name(j.at("family").get<std::string>());
  c.sigma = j.value("sigma", 1.0);
  c.psd_epsilon = j.value("psd_epsilon", 0.0);
  c.validate();
}

struct KernelMatrix {
  int n = 0;
  Eigen::MatrixXd entries;
  std::vector<std::string> item_ids;  // aligned to rows/columns

  void check_shape() const {
    if (n <= 0 || entries.rows() != n || entries.cols() != n ||
        static_cast<int>(item_ids.size()) != n) {
      throw ValidationError("kernel matrix shape inconsistent with item_ids");
    }
  }
};

struct RelevanceVector {
  std::vector<double> scores;  // aligned to kernel item_ids, entries >= 0
};

inline double similarity(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw ValidationError("similarity: dimension mismatch");
  if (u.empty()) throw ValidationError("similarity: empty vectors");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw ValidationError("similarity: zero vector");
  double s = dot / (std::sqrt(nu) * std::sqrt(nv));
  // Rounding can push |s| a hair past 1; the kernel formulas expect [-1, 1].
  if (s > 1.0) s = 1.0;
  if (s < -1.0) s = -1.0;
  if (!std::isfinite(s)) throw NumericError("similarity: non-finite result");
  return s;
}

// Clamps eigenvalues below eps up to eps and recomposes. A matrix that is
// already PSD passes through unchanged up to roundoff.
inline KernelMatrix psd_project(const KernelMatrix& kernel, double eps = 0.0) {
  kernel.check_shape();
  const auto& m = kernel.entries;
  if (!m.allFinite()) throw NumericError("psd_project: non-finite entries");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError("psd_project: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw NumericError("psd_project: eigendecomposition failed (n=" +
                       std::to_string(kernel.n) + ")");
  }
  Eigen::VectorXd evals = solver.eigenvalues();
  for (int i = 0; i < evals.size(); ++i) {
    if (evals(i) < eps) evals(i) = eps;
  }
  KernelMatrix out = kernel;
  out.entries = solver.eigenvectors() * evals.asDiagonal() * solver.eigenvectors().transpose();
  // Recomposition is symmetric up to roundoff; make it exact.
  out.entries = 0.5 * (out.entries + out.entries.transpose().eval());
  return out;
}

// L_ij = exp(-(1 - s_ij)^2 / (2 sigma^2)); s is cosine similarity, so the
// distance 1 - s is 0 for identical items and at most 2. Gaussian of a
// similarity matrix is not guaranteed PSD, hence the projection.
inline KernelMatrix build_gaussian_kernel(const std::vector<std::vector<double>>& embeddings,
                                          const std::vector<std::string>& item_ids,
                                          const KernelConfig& config) {
  config.validate();
  if (config.family != KernelFamily::gaussian) {
    throw ValidationError("build_gaussian_kernel: config family is not gaussian");
  }
  if (embeddings.empty()) throw ValidationError("build_gaussian_kernel: no embeddings");
  if (embeddings.size() != item_ids.size()) {
    throw ValidationError("build_gaussian_kernel: embeddings/item_ids length mismatch");
  }
  const int n = static_cast<int>(embeddings.size());
  KernelMatrix kernel;
  kernel.n = n;
  kernel.item_ids = item_ids;
  kernel.entries.resize(n, n);
  const double denom = 2.0 * config.sigma * config.sigma;
  for (int i = 0; i < n; ++i) {
    kernel.entries(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double d = 1.0 - similarity(embeddings[i], embeddings[j]);
      double v = std::exp(-(d * d) / denom);
      kernel.entries(i, j) = v;
      kernel.entries(j, i) = v;
    }
  }
  return psd_project(kernel, config.psd_epsilon);
}

// Gram matrix of unit-normalized rows: PSD by construction, unit diagonal.
inline KernelMatrix build_linear_kernel(const std::vector<std::vector<double>>& embeddings,
                                        const std::vector<std::string>& item_ids) {
  if (embeddings.empty()) throw ValidationError("build_linear_kernel: no embeddings");
  if (embeddings.size() != item_ids.size()) {
    throw ValidationError("build_linear_kernel: embeddings/item_ids length mismatch");
  }
  const int n = static_cast<int>(embeddings.size());
  KernelMatrix kernel;
  kernel.n = n;
  kernel.item_ids = item_ids;
  kernel.entries.resize(n, n);
  for (int i = 0; i < n; ++i) {
    kernel.entries(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double s = similarity(embeddings[i], embeddings[j]);
      kernel.entries(i, j) = s;
      kernel.entries(j, i) = s;
    }
  }
  return kernel;
}

inline KernelMatrix build_kernel(const std::vector<std::vector<double>>& embeddings,
                                 const std::vector<std::string>& item_ids,
                                 const KernelConfig& config) {
  if (config.family == KernelFamily::gaussian) {
    return build_gaussian_kernel(embeddings, item_ids, config);
  }
  return build_linear_kernel(embeddings, item_ids);
}

// score_i = max(0, cos(query, item_i)). DPP weighting needs non-negative
// entries, so anti-aligned items are clamped to zero rather than kept negative.
inline RelevanceVector relevance_scores(const std::vector<double>& query_embedding,
                                        const std::vector<std::vector<double>>& item_embeddings) {
  RelevanceVector rel;
  rel.scores.reserve(item_embeddings.size());
  for (const auto& item : item_embeddings) {
    double s = similarity(query_embedding, item);
    rel.scores.push_back(s > 0.0 ? s : 0.0);
  }
  return rel;
}

// L' = R L R^T with diagonal R: L'_ij = r_i L_ij r_j. A congruence with a
// diagonal matrix, so symmetry and positive semidefiniteness carry over.
inline KernelMatrix apply_relevance(const KernelMatrix& kernel, const RelevanceVector& relevance) {
  kernel.check_shape();
  if (static_cast<int>(relevance.scores.size()) != kernel.n) {
    throw ValidationError("apply_relevance: relevance length " +
                          std::to_string(relevance.scores.size()) + " != kernel n " +
                          std::to_string(kernel.n));
  }
  for (double r : relevance.scores) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ValidationError("apply_relevance: relevance entries must be finite and non-negative");
    }
  }
  KernelMatrix out = kernel;
  for (int i = 0; i < kernel.n; ++i) {
    for (int j = 0; j < kernel.n; ++j) {
      out.entries(i, j) = relevance.scores[i] * kernel.entries(i, j) * relevance.scores[j];
    }
  }
  return out;
}

}  // namespace dppsumm
