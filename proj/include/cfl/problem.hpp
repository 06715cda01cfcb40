#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "cfl/topology.hpp"
#include "cfl/types.hpp"

namespace cfl::problem {

/// One labelled example. The last feature is the constant bias 1.0.
struct Sample {
  Vector features;
  int label = 0;
};

/// A user's smooth, strongly convex local loss f_ij.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double loss(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  /// Strong convexity modulus.
  virtual double mu() const = 0;
  /// Upper bound on the Lipschitz constant of the gradient.
  virtual double lipschitz() const = 0;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

/// l2-regularized logistic regression over one user's shard:
///   f(x) = (kappa/2)||x||^2 + sum_s [ softplus(w_s^T x) - y_s w_s^T x ].
/// mu is exactly kappa; the Lipschitz bound is kappa + (1/4) sum_s ||w_s||^2.
class LogisticObjective final : public Objective {
 public:
  LogisticObjective(std::vector<Sample> samples, double ridge_weight, Eigen::Index dim);

  Eigen::Index dim() const override { return dim_; }
  double loss(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  double mu() const override { return ridge_; }
  double lipschitz() const override { return lipschitz_; }

  double ridge_weight() const noexcept { return ridge_; }
  std::size_t num_samples() const noexcept { return labels_.size(); }
  const Matrix& features() const noexcept { return features_; }
  const Vector& labels() const noexcept { return labels_; }

 private:
  Eigen::Index dim_;
  double ridge_;
  double lipschitz_;
  Matrix features_;  // samples x dim
  Vector labels_;
};

/// f(x) = (1/2)(x - c)^T Q (x - c) with Q symmetric positive definite.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(Matrix curvature, Vector center);

  Eigen::Index dim() const override { return center_.size(); }
  double loss(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  double mu() const override { return mu_; }
  double lipschitz() const override { return lipschitz_; }

  const Matrix& curvature() const noexcept { return curvature_; }
  const Vector& center() const noexcept { return center_; }

 private:
  Matrix curvature_;
  Vector center_;
  double mu_;
  double lipschitz_;
};

/// Numerically stable log(1 + exp(z)).
double softplus(double z);
double sigmoid(double z);

struct ProxResult {
  Vector point;
  double residual_norm = 0.0;
  std::size_t inner_iterations = 0;
};

/// Stationarity residual of the user subproblem
///   tau = grad f(x) + lambda + sigma1 (x - y).
Vector prox_residual(const Objective& objective, const Vector& x, const Vector& y,
                     const Vector& lambda, double sigma1);

/// Approximately minimizes f(x) + (sigma1/2)||x - y + lambda/sigma1||^2 by
/// fixed-step gradient descent (step 1/(L + sigma1)) from warm_start until
/// ||tau|| <= epsilon. epsilon == 0 requests a machine-scale tolerance of
/// 1e-12 (1 + ||tau(warm_start)||). Throws NonConvergence after max_inner
/// steps.
ProxResult prox_solve(const Objective& objective, const Vector& warm_start, const Vector& y,
                      const Vector& lambda, double sigma1, double epsilon, std::size_t max_inner);

/// Parses a Credit-style CSV: 23 numeric feature columns followed by a 0/1
/// label. Features are min-max scaled per column to [0, 1] over the whole
/// file (constant columns map to 0) and a bias 1.0 is appended, so n = 24.
std::vector<Sample> load_credit_csv(const std::filesystem::path& path, bool skip_header = false);

/// Same, with a configurable number of feature columns.
std::vector<Sample> load_labelled_csv(const std::filesystem::path& path, std::size_t feature_columns,
                                      bool skip_header = false);

struct SyntheticSpec {
  Eigen::Index dim = 10;  // including the bias coordinate
  double feature_scale = 0.6;
  double label_noise = 1.0;
  std::uint64_t seed = 1;
};

/// Seeded Gaussian features (scaled), bias appended, labels from a planted
/// linear separator plus Gaussian noise on the margin.
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec, std::size_t count);

/// One shard of samples per user, in global user order (u_11, u_12, ...).
using Shards = std::vector<std::vector<Sample>>;

/// Seeded shuffle, then deals per_user consecutive samples to each user.
Shards partition(std::span<const Sample> samples, const topology::EsGraph& graph,
                 std::size_t per_user, std::uint64_t seed);

/// Builds one logistic objective per shard.
std::vector<ObjectivePtr> make_logistic_objectives(const Shards& shards, double ridge_weight);

double total_loss(std::span<const ObjectivePtr> objectives, const Vector& x);
Vector total_gradient(std::span<const ObjectivePtr> objectives, const Vector& x);

struct ReferenceSolution {
  Vector x;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
};

/// Minimizes sum_u f_u(x) with accelerated gradient descent until the
/// global gradient norm is <= tol.
ReferenceSolution solve_reference(std::span<const ObjectivePtr> objectives, double tol = 1e-10,
                                  std::size_t max_iterations = 1'000'000);

}  // namespace cfl::problem
