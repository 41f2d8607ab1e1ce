#include <doctest.h>

#include <cmath>

#include "frz/cka.hpp"
#include "frz/rng.hpp"

using namespace frz;

namespace {

Tensor random_matrix(int n, int d, Rng& rng, double scale = 1.0) {
  Tensor t({n, d});
  for (auto& v : t.v) v = float(rng.gauss(0.0, scale));
  return t;
}

// orthogonalize a random square matrix with Gram-Schmidt (double)
std::vector<double> random_orthogonal(int d, Rng& rng) {
  std::vector<double> q(std::size_t(d) * d);
  for (auto& v : q) v = rng.gauss(0.0, 1.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += q[std::size_t(i) * d + k] * q[std::size_t(j) * d + k];
      for (int k = 0; k < d; ++k) q[std::size_t(i) * d + k] -= dot * q[std::size_t(j) * d + k];
    }
    double norm = 0.0;
    for (int k = 0; k < d; ++k) norm += q[std::size_t(i) * d + k] * q[std::size_t(i) * d + k];
    norm = std::sqrt(norm);
    for (int k = 0; k < d; ++k) q[std::size_t(i) * d + k] /= norm;
  }
  return q;
}

Tensor apply_right(const Tensor& x, const std::vector<double>& q, double scalar) {
  const int n = x.shape[0], d = x.shape[1];
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += double(x.v[std::size_t(i) * d + k]) * q[std::size_t(k) * d + j];
      out.v[std::size_t(i) * d + j] = float(acc * scalar);
    }
  return out;
}

}  // namespace

TEST_CASE("self similarity is exactly 1") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Tensor x = random_matrix(12, 7, rng);
    CHECK(std::abs(cka(x, x, true) - 1.0) < 1e-9);
    CHECK(std::abs(cka(x, x, false) - 1.0) < 1e-9);
  }
}

TEST_CASE("hand-computed 2x2 uncentered case") {
  Tensor x({2, 2}), y({2, 2});
  x.v = {1.0f, 0.0f, 0.0f, 1.0f};
  y.v = {0.0f, 1.0f, 1.0f, 0.0f};
  // ||Y^T X||_F^2 = 2, ||X^T X||_F = ||Y^T Y||_F = sqrt(2)
  CHECK(cka(x, y, false) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthogonal transform and isotropic scaling leave cka unchanged") {
  Rng rng(17);
  for (int i = 0; i < 30; ++i) {
    const int n = 10, dx = 6, dy = 5;
    Tensor x = random_matrix(n, dx, rng);
    Tensor y = random_matrix(n, dy, rng);
    double base = cka(x, y, true);
    Tensor xq = apply_right(x, random_orthogonal(dx, rng), rng.uniform(0.2, 3.0));
    Tensor yq = apply_right(y, random_orthogonal(dy, rng), -rng.uniform(0.2, 3.0));
    CHECK(cka(xq, yq, true) == doctest::Approx(base).epsilon(1e-6));
    CHECK(cka(xq, y, false) == doctest::Approx(cka(x, y, false)).epsilon(1e-6));
  }
}

TEST_CASE("scores stay within [0, 1] and symmetric") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    Tensor x = random_matrix(8, 4, rng, rng.uniform(0.1, 4.0));
    Tensor y = random_matrix(8, 9, rng, rng.uniform(0.1, 4.0));
    double s = cka(x, y, true);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0 + 1e-6);
    CHECK(cka(y, x, true) == doctest::Approx(s).epsilon(1e-9));
  }
}

TEST_CASE("constant activations are rejected after centering") {
  Tensor x({4, 3});
  for (auto& v : x.v) v = 2.5f;
  Tensor y({4, 3});
  Rng rng(4);
  for (auto& v : y.v) v = float(rng.gauss(0.0, 1.0));
  CHECK_THROWS_AS(cka(x, y, true), run_error);
}

TEST_CASE("row count mismatch and tiny probes are rejected") {
  Rng rng(5);
  Tensor x = random_matrix(4, 3, rng);
  Tensor y = random_matrix(5, 3, rng);
  CHECK_THROWS_AS(cka(x, y, true), contract_error);
  Tensor one = random_matrix(1, 3, rng);
  CHECK_THROWS_AS(cka(one, one, true), run_error);
}

TEST_CASE("stabilized window rule") {
  StabilizationConfig cfg;
  cfg.window = 5;
  cfg.eps = 0.01;
  cfg.min_score = 0.0;
  CHECK(stabilized({0.99, 0.99, 0.99, 0.99, 0.99}, cfg));
  CHECK_FALSE(stabilized({0.99, 0.99, 0.99}, cfg));  // fewer than window checkpoints

  StabilizationConfig c2;
  c2.window = 3;
  c2.eps = 0.01;
  c2.min_score = 0.8;
  CHECK(stabilized({0.5, 0.9, 0.91, 0.915, 0.918}, c2));  // last three within 0.008
  c2.min_score = 0.95;
  CHECK_FALSE(stabilized({0.5, 0.9, 0.91, 0.915, 0.918}, c2));  // floor not cleared
  c2.min_score = 0.0;
  CHECK_FALSE(stabilized({0.5, 0.9, 0.95, 0.915, 0.918}, c2));  // range too wide
}

TEST_CASE("label_history turns sticky at first stabilization") {
  StabilizationConfig cfg;
  cfg.window = 3;
  cfg.eps = 0.01;
  cfg.min_score = 0.5;

  CkaTrace trace;
  auto push = [&](int unit, double score) {
    CkaTrace::Row r;
    r.unit_id = unit;
    r.checkpoint = int(trace.rows.size());
    r.score = score;
    trace.rows.push_back(r);
  };
  // unit 0 never stabilizes; unit 1 stabilizes at its checkpoint 3
  for (double s : {0.1, 0.3, 0.5, 0.3, 0.6, 0.2}) push(0, s);
  for (double s : {0.2, 0.8, 0.805, 0.802, 0.3, 0.9}) push(1, s);

  auto labels = label_history(trace, cfg);
  CHECK(labels.at(0) == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0});
  CHECK(labels.at(1) == std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1});  // sticky despite the dip
}

TEST_CASE("label_history equals a prefix-scan oracle on random traces") {
  Rng rng(31);
  StabilizationConfig cfg;
  cfg.window = 4;
  cfg.eps = 0.05;
  cfg.min_score = 0.4;
  for (int rep = 0; rep < 40; ++rep) {
    CkaTrace trace;
    int len = 5 + int(rng.below(20));
    std::vector<double> scores;
    for (int i = 0; i < len; ++i) {
      double s = rng.next_double();
      scores.push_back(s);
      CkaTrace::Row r;
      r.unit_id = 0;
      r.checkpoint = i;
      r.score = s;
      trace.rows.push_back(r);
    }
    auto labels = label_history(trace, cfg).at(0);
    bool on = false;
    for (int i = 0; i < len; ++i) {
      std::vector<double> prefix(scores.begin(), scores.begin() + i + 1);
      if (stabilized(prefix, cfg)) on = true;
      CHECK(int(labels[std::size_t(i)]) == (on ? 1 : 0));
    }
    // monotone: never 1 -> 0
    for (int i = 1; i < len; ++i) CHECK(labels[std::size_t(i)] >= labels[std::size_t(i) - 1]);
  }
}

TEST_CASE("cka trace csv round-trips") {
  CkaTrace t;
  t.rows = {{0, 0, 0, 0.5}, {1, 0, 0, 0.25}, {0, 1, 0, 0.75}};
  std::string path = "build_test_cka_trace.csv";
  t.write_csv(path);
  CkaTrace back = CkaTrace::from_csv_file(path);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[2].score == doctest::Approx(0.75));
  CHECK(back.rows[1].unit_id == 1);
  std::remove(path.c_str());
}
