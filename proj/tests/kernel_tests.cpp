#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dppsumm/kernel.hpp"
#include "dppsumm/rng.hpp"

using namespace dppsumm;

namespace {

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("kp" + std::to_string(i));
  return ids;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  }
  return out;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  return solver.eigenvalues().minCoeff();
}

std::vector<std::vector<double>> random_unit_vectors(int n, int dim, SplitMix64& rng) {
  std::vector<std::vector<double>> vecs(n, std::vector<double>(dim));
  for (auto& v : vecs) {
    double norm2 = 0.0;
    for (auto& x : v) {
      x = 2.0 * rng.next_double() - 1.0;
      norm2 += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm2);
  }
  return vecs;
}

}  // namespace

TEST_CASE("cosine similarity matches hand values") {
  CHECK(similarity({1, 0}, {1, 0}) == Catch::Approx(1.0));
  CHECK(similarity({1, 0}, {0, 1}) == Catch::Approx(0.0).margin(1e-12));
  CHECK(similarity({1, 1}, {1, 0}) == Catch::Approx(0.70710678).epsilon(1e-6));
  CHECK(similarity({1, 0}, {-1, 0}) == Catch::Approx(-1.0));
  CHECK(similarity({3, 4}, {3, 4}) == Catch::Approx(1.0));
  CHECK_THROWS_AS(similarity({0, 0}, {1, 0}), ValidationError);
  CHECK_THROWS_AS(similarity({1, 0}, {1, 0, 0}), ValidationError);
}

TEST_CASE("gaussian kernel hits the stated closed-form entries") {
  KernelConfig cfg;
  cfg.family = KernelFamily::gaussian;

  SECTION("identical vectors give off-diagonal 1") {
    cfg.sigma = 1.0;
    auto k = build_gaussian_kernel({{1, 0}, {1, 0}}, make_ids(2), cfg);
    CHECK(k.entries(0, 1) == Catch::Approx(1.0).margin(1e-9));
    CHECK(k.entries(0, 0) == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("orthogonal vectors, sigma 1: exp(-1/2)") {
    cfg.sigma = 1.0;
    auto k = build_gaussian_kernel({{1, 0}, {0, 1}}, make_ids(2), cfg);
    CHECK(k.entries(0, 1) == Catch::Approx(0.60653066).epsilon(1e-6));
  }
  SECTION("orthogonal vectors, sigma 0.1: exp(-50) decorrelates") {
    cfg.sigma = 0.1;
    auto k = build_gaussian_kernel({{1, 0}, {0, 1}}, make_ids(2), cfg);
    CHECK(k.entries(0, 1) == Catch::Approx(1.928749848e-22).margin(1e-12));
  }
}

TEST_CASE("linear kernel is the normalized Gram matrix") {
  SECTION("orthonormal rows give the identity") {
    auto k = build_linear_kernel({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, make_ids(3));
    CHECK((k.entries - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("duplicate row makes the determinant vanish") {
    auto k = build_linear_kernel({{2, 1}, {2, 1}}, make_ids(2));
    CHECK(k.entries.determinant() == Catch::Approx(0.0).margin(1e-12));
    CHECK(k.entries(0, 1) == Catch::Approx(1.0));
  }
  SECTION("hand-computed Gram of (1,0),(1,1)") {
    auto k = build_linear_kernel({{1, 0}, {1, 1}}, make_ids(2));
    CHECK(k.entries(0, 0) == Catch::Approx(1.0));
    CHECK(k.entries(1, 1) == Catch::Approx(1.0));
    CHECK(k.entries(0, 1) == Catch::Approx(0.70710678).epsilon(1e-6));
    CHECK(k.entries(1, 0) == Catch::Approx(0.70710678).epsilon(1e-6));
  }
  SECTION("zero vector is rejected") {
    CHECK_THROWS_AS(build_linear_kernel({{1, 0}, {0, 0}}, make_ids(2)), ValidationError);
  }
}

TEST_CASE("relevance scores are clamped cosines") {
  auto rel = relevance_scores({1, 0}, {{1, 0}, {0, 1}, {1, 1}, {-1, 0}});
  REQUIRE(rel.scores.size() == 4);
  CHECK(rel.scores[0] == Catch::Approx(1.0));
  CHECK(rel.scores[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(rel.scores[2] == Catch::Approx(0.70710678).epsilon(1e-6));
  CHECK(rel.scores[3] == 0.0);  // anti-aligned clamps to zero
  CHECK_THROWS_AS(relevance_scores({0, 0}, {{1, 0}}), ValidationError);
}

TEST_CASE("apply_relevance performs the diagonal congruence") {
  KernelMatrix L;
  L.n = 2;
  L.item_ids = make_ids(2);
  L.entries.resize(2, 2);
  L.entries << 1.0, 0.5, 0.5, 1.0;

  SECTION("hand-multiplied example") {
    auto Lp = apply_relevance(L, RelevanceVector{{2.0, 1.0}});
    CHECK(Lp.entries(0, 0) == Catch::Approx(4.0));
    CHECK(Lp.entries(0, 1) == Catch::Approx(1.0));
    CHECK(Lp.entries(1, 0) == Catch::Approx(1.0));
    CHECK(Lp.entries(1, 1) == Catch::Approx(1.0));
  }
  SECTION("unit relevance is the identity weighting") {
    auto Lp = apply_relevance(L, RelevanceVector{{1.0, 1.0}});
    CHECK((Lp.entries - L.entries).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("zero relevance annihilates its row and column") {
    auto Lp = apply_relevance(L, RelevanceVector{{0.0, 1.0}});
    CHECK(Lp.entries(0, 0) == 0.0);
    CHECK(Lp.entries(0, 1) == 0.0);
    CHECK(Lp.entries(1, 0) == 0.0);
    CHECK(Lp.entries(1, 1) == Catch::Approx(1.0));
  }
  SECTION("negative or mismatched relevance is rejected") {
    CHECK_THROWS_AS(apply_relevance(L, RelevanceVector{{-0.1, 1.0}}), ValidationError);
    CHECK_THROWS_AS(apply_relevance(L, RelevanceVector{{1.0}}), ValidationError);
  }
}

TEST_CASE("relevance weighting is a determinant congruence on all subsets") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 3 + static_cast<int>(rng.next_index(4));  // 3..6
    auto vecs = random_unit_vectors(n, 8, rng);
    KernelConfig cfg;
    cfg.sigma = 1.0;
    auto L = build_gaussian_kernel(vecs, make_ids(n), cfg);
    RelevanceVector rel;
    for (int i = 0; i < n; ++i) rel.scores.push_back(rng.next_double() * 2.0);
    auto Lp = apply_relevance(L, rel);

    for (int mask = 1; mask < (1 << n); ++mask) {
      std::vector<int> idx;
      double r2 = 1.0;
      for (int i = 0; i < n; ++i) {
        if (mask & (1 << i)) {
          idx.push_back(i);
          r2 *= rel.scores[i] * rel.scores[i];
        }
      }
      double lhs = submatrix(Lp.entries, idx).determinant();
      double rhs = r2 * submatrix(L.entries, idx).determinant();
      CHECK(lhs == Catch::Approx(rhs).margin(1e-10).epsilon(1e-8));
    }
  }
}

TEST_CASE("psd projection clamps negative eigenvalues") {
  SECTION("identity passes through") {
    KernelMatrix k;
    k.n = 3;
    k.item_ids = make_ids(3);
    k.entries = Eigen::MatrixXd::Identity(3, 3);
    auto p = psd_project(k, 0.0);
    CHECK((p.entries - k.entries).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("indefinite matrix projects to its PSD part") {
    KernelMatrix k;
    k.n = 2;
    k.item_ids = make_ids(2);
    k.entries.resize(2, 2);
    k.entries << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
    auto p = psd_project(k, 0.0);
    CHECK(p.entries(0, 0) == Catch::Approx(1.5).epsilon(1e-9));
    CHECK(p.entries(0, 1) == Catch::Approx(1.5).epsilon(1e-9));
    CHECK(p.entries(1, 0) == Catch::Approx(1.5).epsilon(1e-9));
    CHECK(p.entries(1, 1) == Catch::Approx(1.5).epsilon(1e-9));
    CHECK(min_eigenvalue(p.entries) >= -1e-8);
  }
  SECTION("already-PSD kernels are unchanged within 1e-8") {
    SplitMix64 rng(7);
    auto vecs = random_unit_vectors(12, 16, rng);
    auto k = build_linear_kernel(vecs, make_ids(12));
    auto p = psd_project(k, 0.0);
    CHECK((p.entries - k.entries).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SECTION("asymmetric input is rejected") {
    KernelMatrix k;
    k.n = 2;
    k.item_ids = make_ids(2);
    k.entries.resize(2, 2);
    k.entries << 1.0, 0.2, 0.7, 1.0;
    CHECK_THROWS_AS(psd_project(k, 0.0), ValidationError);
  }
}

TEST_CASE("every constructed kernel is symmetric and near-PSD") {
  SplitMix64 rng(99);
  for (double sigma : {0.1, 1.0, 10.0}) {
    KernelConfig cfg;
    cfg.sigma = sigma;
    auto vecs = random_unit_vectors(20, 12, rng);
    auto k = build_gaussian_kernel(vecs, make_ids(20), cfg);
    CHECK((k.entries - k.entries.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(min_eigenvalue(k.entries) >= -1e-8);
    for (int i = 0; i < k.n; ++i) CHECK(k.entries(i, i) >= 0.0);
  }
  auto vecs = random_unit_vectors(20, 12, rng);
  auto lin = build_linear_kernel(vecs, make_ids(20));
  CHECK((lin.entries - lin.entries.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(min_eigenvalue(lin.entries) >= -1e-8);
}

TEST_CASE("gaussian entries are monotone in similarity") {
  KernelConfig cfg;
  cfg.sigma = 1.0;
  // Angles spread over [0, pi): similarity strictly decreasing.
  std::vector<std::vector<double>> vecs;
  for (int i = 0; i < 6; ++i) {
    double theta = 0.4 * i;
    vecs.push_back({std::cos(theta), std::sin(theta)});
  }
  auto k = build_gaussian_kernel(vecs, make_ids(6), cfg);
  // Entries in row 0 must strictly decrease as the angle from item 0 grows.
  for (int j = 2; j < 6; ++j) CHECK(k.entries(0, j - 1) > k.entries(0, j));
}

TEST_CASE("kernel config serializes for the selection record") {
  KernelConfig cfg;
  cfg.family = KernelFamily::gaussian;
  cfg.sigma = 0.1;
  cfg.psd_epsilon = 1e-10;
  nlohmann::json j = cfg;
  CHECK(j.at("family") == "gaussian");
  CHECK(j.at("sigma") == Catch::Approx(0.1));
  auto back = j.get<KernelConfig>();
  CHECK(back.family == KernelFamily::gaussian);
  CHECK(back.sigma == Catch::Approx(0.1));
  CHECK(back.psd_epsilon == Catch::Approx(1e-10));

  nlohmann::json bad = {{"family", "poly"}, {"sigma", 1.0}};
  CHECK_THROWS_AS(bad.get<KernelConfig>(), ValidationError);
  nlohmann::json neg = {{"family", "gaussian"}, {"sigma", -1.0}};
  CHECK_THROWS_AS(neg.get<KernelConfig>(), ValidationError);
}
