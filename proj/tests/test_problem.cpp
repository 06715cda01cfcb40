#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cfl/errors.hpp"
#include "cfl/problem.hpp"
#include "doctest.h"

using namespace cfl;
using namespace cfl::problem;

namespace {

Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = scale * normal(rng);
  return v;
}

std::vector<Sample> random_samples(std::mt19937_64& rng, std::size_t count, Eigen::Index n) {
  std::vector<Sample> out;
  for (std::size_t s = 0; s < count; ++s) out.push_back({random_vector(rng, n), static_cast<int>(rng() % 2)});
  return out;
}

// Plain per-sample summation, no stabilisation tricks.
double naive_loss(const std::vector<Sample>& samples, double ridge, const Vector& x) {
  double total = 0.5 * ridge * x.squaredNorm();
  for (const auto& s : samples) {
    const double p = 1.0 / (1.0 + std::exp(-s.features.dot(x)));
    total -= s.label == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("cfl_test_" + name);
  std::ofstream(path) << content;
  return path;
}

}  // namespace

TEST_CASE("logistic loss at the origin") {
  Vector w(3);
  w << 0.3, -2.0, 1.0;
  for (int label : {0, 1}) {
    LogisticObjective obj({{w, label}}, 0.01, 3);
    CHECK(obj.loss(Vector::Zero(3)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  LogisticObjective obj({{w, 1}}, 0.01, 3);
  CHECK_THROWS_AS(obj.loss(Vector::Zero(2)), InvalidParameter);
}

TEST_CASE("logistic loss matches direct summation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto samples = random_samples(rng, 2, 3);
    LogisticObjective obj(samples, 0.01, 3);
    const Vector x = random_vector(rng, 3);
    CHECK(std::abs(obj.loss(x) - naive_loss(samples, 0.01, x)) <= 1e-12);
  }
}

TEST_CASE("logistic loss is finite for huge margins") {
  Vector w(1);
  w << 1.0;
  LogisticObjective obj({{w, 0}, {w, 1}}, 0.01, 1);
  Vector x(1);
  x << 1e4;
  CHECK(std::isfinite(obj.loss(x)));
  CHECK(obj.loss(x) == doctest::Approx(1e4 + 0.5 * 0.01 * 1e8));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("logistic gradient") {
  Vector w(2);
  w << 1.5, -0.5;
  LogisticObjective one({{w, 1}}, 0.01, 2);
  CHECK((one.gradient(Vector::Zero(2)) + 0.5 * w).norm() < 1e-15);

  LogisticObjective empty({}, 0.3, 2);
  Vector x(2);
  x << 2.0, -1.0;
  CHECK((empty.gradient(x) - 0.3 * x).norm() < 1e-15);
  CHECK_THROWS_AS(empty.gradient(Vector::Zero(3)), InvalidParameter);
  CHECK_THROWS_AS(LogisticObjective({}, 0.0, 2), InvalidParameter);
  CHECK_THROWS_AS(LogisticObjective({{w, 2}}, 0.1, 2), InvalidParameter);
}

TEST_CASE("logistic gradient agrees with central finite differences") {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + trial % 5;
    LogisticObjective obj(random_samples(rng, 1 + trial % 7, n), 0.01 + 0.1 * (trial % 3), n);
    const Vector x = random_vector(rng, n);
    const Vector g = obj.gradient(x);
    Vector fd(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      fd(k) = (obj.loss(xp) - obj.loss(xm)) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("logistic loss is strongly convex with modulus ridge") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const double ridge = 0.01 + 0.05 * (trial % 4);
    LogisticObjective obj(random_samples(rng, 4, 3), ridge, 3);
    const Vector x = random_vector(rng, 3, 2.0);
    const Vector y = random_vector(rng, 3, 2.0);
    const double gap = obj.loss(x) - obj.loss(y) - obj.gradient(y).dot(x - y);
    CHECK(gap >= 0.5 * obj.mu() * (x - y).squaredNorm() - 1e-10);
  }
}

TEST_CASE("logistic Lipschitz bound") {
  std::mt19937_64 rng(13);
  const auto samples = random_samples(rng, 6, 4);
  LogisticObjective obj(samples, 0.02, 4);
  double sq = 0.0;
  for (const auto& s : samples) sq += s.features.squaredNorm();
  CHECK(obj.lipschitz() >= 0.02 + 0.25 * sq - 1e-12);
  CHECK(obj.mu() == 0.02);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = random_vector(rng, 4, 3.0);
    const Vector y = random_vector(rng, 4, 3.0);
    CHECK((obj.gradient(x) - obj.gradient(y)).norm() <= obj.lipschitz() * (x - y).norm() + 1e-12);
  }
}

TEST_CASE("prox on a quadratic has the closed-form solution") {
  const Eigen::Index n = 4;
  QuadraticObjective obj(Matrix::Identity(n, n), Vector::Zero(n));
  Vector y = Vector::Zero(n);
  y(0) = 2.0;
  const auto r = prox_solve(obj, Vector::Zero(n), y, Vector::Zero(n), 1.0, 0.0, 100000);
  Vector expected = Vector::Zero(n);
  expected(0) = 1.0;
  CHECK((r.point - expected).norm() <= 1e-9);

  // General case: (Q + s I) x = Q c + s y - lambda.
  std::mt19937_64 rng(2);
  Matrix b = Matrix::Random(n, n);
  const Matrix q = b * b.transpose() + 0.5 * Matrix::Identity(n, n);
  const Vector c = random_vector(rng, n);
  const Vector lambda = random_vector(rng, n);
  const Vector yy = random_vector(rng, n);
  const double s1 = 0.7;
  QuadraticObjective general(q, c);
  const Vector closed = (q + s1 * Matrix::Identity(n, n)).ldlt().solve(q * c + s1 * yy - lambda);
  const auto rg = prox_solve(general, Vector::Zero(n), yy, lambda, s1, 0.0, 1000000);
  CHECK((rg.point - closed).norm() <= 1e-9);
}

TEST_CASE("prox returns the warm start when it is already accurate") {
  std::mt19937_64 rng(3);
  LogisticObjective obj(random_samples(rng, 5, 3), 0.01, 3);
  const Vector warm = random_vector(rng, 3);
  const auto r = prox_solve(obj, warm, Vector::Zero(3), Vector::Zero(3), 1.0, 1e6, 10);
  CHECK(r.inner_iterations == 0);
  CHECK(r.point == warm);
}

TEST_CASE("prox reaches the requested accuracy and reports the true residual") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    LogisticObjective obj(random_samples(rng, 10, 5), 0.01, 5);
    const Vector warm = random_vector(rng, 5);
    const Vector y = random_vector(rng, 5);
    const Vector lambda = random_vector(rng, 5, 0.1);
    const double s1 = 0.5;
    const double start = prox_residual(obj, warm, y, lambda, s1).norm();
    const auto r = prox_solve(obj, warm, y, lambda, s1, 1e-8, 1000000);
    CHECK(r.residual_norm <= 1e-8);
    CHECK(r.residual_norm <= start);
    const Vector tau = obj.gradient(r.point) + lambda + s1 * (r.point - y);
    CHECK(std::abs(tau.norm() - r.residual_norm) <= 1e-12);
  }
}

TEST_CASE("prox reports nonconvergence with its best residual") {
  std::mt19937_64 rng(6);
  LogisticObjective obj(random_samples(rng, 10, 3), 0.01, 3);
  try {
    prox_solve(obj, Vector::Zero(3), Vector::Ones(3) * 5.0, Vector::Zero(3), 1.0, 1e-14, 3);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.iterations() == 3);
    CHECK(e.best_residual() > 1e-14);
  }
  CHECK_THROWS_AS(prox_solve(obj, Vector::Zero(3), Vector::Zero(3), Vector::Zero(3), 0.0, 1e-3, 10),
                  InvalidParameter);
  CHECK_THROWS_AS(prox_solve(obj, Vector::Zero(3), Vector::Zero(3), Vector::Zero(3), 1.0, -1.0, 10),
                  InvalidParameter);
}

TEST_CASE("csv loader scales columns and appends a bias") {
  const auto path = temp_file("scaled.csv", "0,10,5,1\n2,20,5,0\n4,15,5,1\n");
  const auto samples = load_labelled_csv(path, 3);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].features.size() == 4);
  // column 0: min 0 max 4; column 1: min 10 max 20; column 2 constant.
  const double expected[3][4] = {{0.0, 0.0, 0.0, 1.0}, {0.5, 1.0, 0.0, 1.0}, {1.0, 0.5, 0.0, 1.0}};
  for (int s = 0; s < 3; ++s) {
    for (int c = 0; c < 4; ++c) CHECK(samples[static_cast<std::size_t>(s)].features(c) == doctest::Approx(expected[s][c]));
  }
  CHECK(samples[0].label == 1);
  CHECK(samples[1].label == 0);

  const auto header = temp_file("header.csv", "a,b,c,y\n1,2,3,0\n3,2,1,1\n");
  CHECK(load_labelled_csv(header, 3, true).size() == 2);
  std::filesystem::remove(path);
  std::filesystem::remove(header);
}

TEST_CASE("csv loader rejects malformed input with the row number") {
  const auto short_row = temp_file("short.csv", "1,2,3,0\n1,2,1\n");
  try {
    load_labelled_csv(short_row, 3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  const auto bad_label = temp_file("label.csv", "1,2,3,0\n1,2,1,2\n");
  CHECK_THROWS_AS(load_labelled_csv(bad_label, 3), DataError);
  const auto bad_number = temp_file("number.csv", "1,x,3,0\n");
  CHECK_THROWS_AS(load_labelled_csv(bad_number, 3), DataError);
  CHECK_THROWS_AS(load_credit_csv("/nonexistent/credit.csv"), DataError);

  std::string credit;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 23; ++c) credit += std::to_string(r * c) + ",";
    credit += std::to_string(r % 2) + "\n";
  }
  const auto credit_path = temp_file("credit.csv", credit);
  const auto loaded = load_credit_csv(credit_path);
  CHECK(loaded.size() == 5);
  CHECK(loaded[0].features.size() == 24);
  for (const auto& p : {short_row, bad_label, bad_number, credit_path}) std::filesystem::remove(p);
}

TEST_CASE("partition is deterministic and disjoint") {
  const auto samples = generate_synthetic({3, 0.6, 1.0, 9}, 100);
  const topology::EsGraph g(2, {{0, 1}}, {2, 3});
  const auto a = partition(samples, g, 4, 7);
  const auto b = partition(samples, g, 4, 7);
  REQUIRE(a.size() == 5);
  std::vector<const Sample*> seen;
  for (std::size_t u = 0; u < a.size(); ++u) {
    REQUIRE(a[u].size() == 4);
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(a[u][s].features == b[u][s].features);
      CHECK(a[u][s].label == b[u][s].label);
    }
  }
  // Disjoint: the 20 dealt samples are distinct rows of the source.
  std::vector<Vector> dealt;
  for (const auto& shard : a)
    for (const auto& s : shard) dealt.push_back(s.features);
  for (std::size_t i = 0; i < dealt.size(); ++i)
    for (std::size_t j = i + 1; j < dealt.size(); ++j) CHECK(dealt[i] != dealt[j]);

  CHECK_THROWS_AS(partition(samples, g, 0, 7), DataError);
  CHECK_THROWS_AS(partition(samples, g, 21, 7), DataError);
}

TEST_CASE("reference solver on pure quadratics") {
  std::vector<ObjectivePtr> objs;
  for (int u = 0; u < 5; ++u)
    objs.push_back(std::make_shared<QuadraticObjective>(0.01 * Matrix::Identity(3, 3), Vector::Zero(3)));
  CHECK(solve_reference(objs).x.norm() <= 1e-10);

  // Sum of quadratics with centres c_u: x* = (sum Q_u)^{-1} sum Q_u c_u.
  std::mt19937_64 rng(1);
  std::vector<ObjectivePtr> mixed;
  Matrix q_sum = Matrix::Zero(3, 3);
  Vector rhs = Vector::Zero(3);
  for (int u = 0; u < 4; ++u) {
    Matrix b = Matrix::Random(3, 3);
    const Matrix q = b * b.transpose() + 0.1 * Matrix::Identity(3, 3);
    const Vector c = random_vector(rng, 3);
    q_sum += q;
    rhs += q * c;
    mixed.push_back(std::make_shared<QuadraticObjective>(q, c));
  }
  CHECK((solve_reference(mixed).x - q_sum.ldlt().solve(rhs)).norm() <= 1e-9);
}

TEST_CASE("reference solver matches a grid search in one dimension") {
  Vector plus(1), minus(1);
  plus << 1.0;
  minus << -1.0;
  // Three samples push towards positive x, one towards negative.
  std::vector<ObjectivePtr> objs = {
      std::make_shared<LogisticObjective>(std::vector<Sample>{{plus, 1}, {minus, 0}}, 0.01, 1),
      std::make_shared<LogisticObjective>(std::vector<Sample>{{plus, 1}, {minus, 1}}, 0.01, 1)};
  const auto ref = solve_reference(objs);
  CHECK(ref.gradient_norm <= 1e-10);
  CHECK(ref.x(0) > 0.0);

  double best_x = 0.0, best_f = std::numeric_limits<double>::infinity();
  for (int k = -200000; k <= 200000; ++k) {
    Vector x(1);
    x << k * 5e-5;
    const double f = total_loss(objs, x);
    if (f < best_f) {
      best_f = f;
      best_x = x(0);
    }
  }
  CHECK(std::abs(ref.x(0) - best_x) <= 1e-4);
}

TEST_CASE("reference solution is stable under a tighter tolerance") {
  const auto samples = generate_synthetic({5, 0.6, 1.0, 3}, 60);
  const topology::EsGraph g(3, {{0, 1}, {1, 2}}, {2, 2, 2});
  const auto objs = make_logistic_objectives(partition(samples, g, 10, 1), 0.01);
  const double kappa_total = 0.01 * 6;
  const auto coarse = solve_reference(objs, 1e-8);
  const auto fine = solve_reference(objs, 1e-9);
  CHECK(coarse.gradient_norm <= 1e-8);
  CHECK((coarse.x - fine.x).norm() <= 1e-8 / kappa_total);
  CHECK(total_gradient(objs, fine.x).norm() <= 1e-9);
}
