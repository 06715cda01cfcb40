#include "cfl/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "cfl/errors.hpp"

namespace cfl::problem {

namespace {

void check_dim(const Vector& x, Eigen::Index dim, const char* what) {
  if (x.size() != dim) {
    throw InvalidParameter(std::string(what) + ": expected dimension " + std::to_string(dim) +
                           ", got " + std::to_string(x.size()));
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& text, std::size_t row, std::size_t col) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  auto rest = text.substr(used);
  const bool trailing_space_only =
      std::all_of(rest.begin(), rest.end(), [](unsigned char c) { return std::isspace(c); });
  if (used == 0 || !trailing_space_only || !std::isfinite(value)) {
    throw DataError("row " + std::to_string(row) + ", column " + std::to_string(col) +
                    ": not a number: '" + text + "'");
  }
  return value;
}

}  // namespace

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LogisticObjective::LogisticObjective(std::vector<Sample> samples, double ridge_weight,
                                     Eigen::Index dim)
    : dim_(dim), ridge_(ridge_weight) {
  if (dim <= 0) throw InvalidParameter("model dimension must be positive");
  if (!(ridge_weight > 0.0)) {
    throw InvalidParameter("ridge weight must be positive for strong convexity");
  }
  features_.resize(static_cast<Eigen::Index>(samples.size()), dim);
  labels_.resize(static_cast<Eigen::Index>(samples.size()));
  double squared_norms = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    check_dim(samples[s].features, dim, "sample features");
    if (samples[s].label != 0 && samples[s].label != 1) {
      throw InvalidParameter("labels must be 0 or 1");
    }
    const auto row = static_cast<Eigen::Index>(s);
    features_.row(row) = samples[s].features.transpose();
    labels_(row) = samples[s].label;
    squared_norms += samples[s].features.squaredNorm();
  }
  lipschitz_ = ridge_ + 0.25 * squared_norms;
}

double LogisticObjective::loss(const Vector& x) const {
  check_dim(x, dim_, "loss");
  const Vector margins = features_ * x;
  double total = 0.5 * ridge_ * x.squaredNorm();
  for (Eigen::Index s = 0; s < margins.size(); ++s) {
    total += softplus(margins(s)) - labels_(s) * margins(s);
  }
  return total;
}

Vector LogisticObjective::gradient(const Vector& x) const {
  check_dim(x, dim_, "gradient");
  Vector weights = features_ * x;
  for (Eigen::Index s = 0; s < weights.size(); ++s) weights(s) = sigmoid(weights(s)) - labels_(s);
  Vector g = ridge_ * x;
  g.noalias() += features_.transpose() * weights;
  return g;
}

QuadraticObjective::QuadraticObjective(Matrix curvature, Vector center)
    : curvature_(std::move(curvature)), center_(std::move(center)) {
  if (curvature_.rows() != center_.size() || curvature_.cols() != center_.size()) {
    throw InvalidParameter("quadratic curvature must be square and match the center");
  }
  if (!curvature_.isApprox(curvature_.transpose())) {
    throw InvalidParameter("quadratic curvature must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(curvature_, Eigen::EigenvaluesOnly);
  mu_ = eig.eigenvalues().minCoeff();
  lipschitz_ = eig.eigenvalues().maxCoeff();
  if (!(mu_ > 0.0)) throw InvalidParameter("quadratic curvature must be positive definite");
}

double QuadraticObjective::loss(const Vector& x) const {
  check_dim(x, center_.size(), "loss");
  const Vector d = x - center_;
  return 0.5 * d.dot(curvature_ * d);
}

Vector QuadraticObjective::gradient(const Vector& x) const {
  check_dim(x, center_.size(), "gradient");
  return curvature_ * (x - center_);
}

Vector prox_residual(const Objective& objective, const Vector& x, const Vector& y,
                     const Vector& lambda, double sigma1) {
  return objective.gradient(x) + lambda + sigma1 * (x - y);
}

ProxResult prox_solve(const Objective& objective, const Vector& warm_start, const Vector& y,
                      const Vector& lambda, double sigma1, double epsilon, std::size_t max_inner) {
  const auto n = objective.dim();
  check_dim(warm_start, n, "prox warm start");
  check_dim(y, n, "prox y");
  check_dim(lambda, n, "prox lambda");
  if (!(sigma1 > 0.0)) throw InvalidParameter("sigma1 must be positive");
  if (!(epsilon >= 0.0)) throw InvalidParameter("epsilon must be nonnegative");

  ProxResult result{warm_start, 0.0, 0};
  Vector residual = prox_residual(objective, result.point, y, lambda, sigma1);
  result.residual_norm = residual.norm();
  const double target = epsilon > 0.0 ? epsilon : 1e-12 * (1.0 + result.residual_norm);
  const double step = 1.0 / (objective.lipschitz() + sigma1);

  while (result.residual_norm > target) {
    if (result.inner_iterations >= max_inner) {
      throw NonConvergence("prox_solve: residual " + std::to_string(result.residual_norm) +
                               " above " + std::to_string(target) + " after " +
                               std::to_string(max_inner) + " steps",
                           result.residual_norm, result.inner_iterations);
    }
    result.point -= step * residual;
    residual = prox_residual(objective, result.point, y, lambda, sigma1);
    result.residual_norm = residual.norm();
    ++result.inner_iterations;
  }
  return result;
}

std::vector<Sample> load_labelled_csv(const std::filesystem::path& path, std::size_t feature_columns,
                                      bool skip_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::vector<std::vector<double>> raw;
  std::vector<int> labels;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 && skip_header) continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != feature_columns + 1) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(feature_columns + 1) + " entries, got " +
                      std::to_string(cells.size()));
    }
    std::vector<double> values(feature_columns);
    for (std::size_t c = 0; c < feature_columns; ++c) values[c] = parse_number(cells[c], row, c);
    const double label = parse_number(cells[feature_columns], row, feature_columns);
    if (label != 0.0 && label != 1.0) {
      throw DataError("row " + std::to_string(row) + ": label must be 0 or 1, got " +
                      cells[feature_columns]);
    }
    raw.push_back(std::move(values));
    labels.push_back(static_cast<int>(label));
  }

  std::vector<double> lo(feature_columns, std::numeric_limits<double>::infinity());
  std::vector<double> hi(feature_columns, -std::numeric_limits<double>::infinity());
  for (const auto& r : raw) {
    for (std::size_t c = 0; c < feature_columns; ++c) {
      lo[c] = std::min(lo[c], r[c]);
      hi[c] = std::max(hi[c], r[c]);
    }
  }

  const auto dim = static_cast<Eigen::Index>(feature_columns + 1);
  std::vector<Sample> samples;
  samples.reserve(raw.size());
  for (std::size_t s = 0; s < raw.size(); ++s) {
    Sample sample{Vector(dim), labels[s]};
    for (std::size_t c = 0; c < feature_columns; ++c) {
      const double range = hi[c] - lo[c];
      sample.features(static_cast<Eigen::Index>(c)) = range > 0.0 ? (raw[s][c] - lo[c]) / range : 0.0;
    }
    sample.features(dim - 1) = 1.0;
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<Sample> load_credit_csv(const std::filesystem::path& path, bool skip_header) {
  return load_labelled_csv(path, 23, skip_header);
}

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec, std::size_t count) {
  if (spec.dim < 1) throw InvalidParameter("synthetic dimension must be positive");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector planted(spec.dim);
  for (Eigen::Index d = 0; d < spec.dim; ++d) planted(d) = normal(rng);

  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Vector w(spec.dim);
    for (Eigen::Index d = 0; d + 1 < spec.dim; ++d) w(d) = spec.feature_scale * normal(rng);
    w(spec.dim - 1) = 1.0;
    const double margin = planted.dot(w) + spec.label_noise * normal(rng);
    samples.push_back({std::move(w), margin > 0.0 ? 1 : 0});
  }
  return samples;
}

Shards partition(std::span<const Sample> samples, const topology::EsGraph& graph,
                 std::size_t per_user, std::uint64_t seed) {
  if (per_user == 0) throw DataError("every user must hold at least one sample");
  const std::size_t users = graph.total_users();
  if (per_user * users > samples.size()) {
    throw DataError("need " + std::to_string(per_user * users) + " samples for " +
                    std::to_string(users) + " users, have " + std::to_string(samples.size()));
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Shards shards(users);
  for (std::size_t u = 0; u < users; ++u) {
    shards[u].reserve(per_user);
    for (std::size_t k = 0; k < per_user; ++k) shards[u].push_back(samples[order[u * per_user + k]]);
  }
  return shards;
}

std::vector<ObjectivePtr> make_logistic_objectives(const Shards& shards, double ridge_weight) {
  if (shards.empty() || shards.front().empty()) throw DataError("no shards to build objectives from");
  const auto dim = shards.front().front().features.size();
  std::vector<ObjectivePtr> objectives;
  objectives.reserve(shards.size());
  for (const auto& shard : shards) {
    objectives.push_back(std::make_shared<LogisticObjective>(shard, ridge_weight, dim));
  }
  return objectives;
}

double total_loss(std::span<const ObjectivePtr> objectives, const Vector& x) {
  double total = 0.0;
  for (const auto& f : objectives) total += f->loss(x);
  return total;
}

Vector total_gradient(std::span<const ObjectivePtr> objectives, const Vector& x) {
  Vector g = Vector::Zero(x.size());
  for (const auto& f : objectives) g += f->gradient(x);
  return g;
}

ReferenceSolution solve_reference(std::span<const ObjectivePtr> objectives, double tol,
                                  std::size_t max_iterations) {
  if (objectives.empty()) throw InvalidParameter("solve_reference needs at least one objective");
  if (!(tol > 0.0)) throw InvalidParameter("reference tolerance must be positive");
  const auto n = objectives.front()->dim();
  double lipschitz = 0.0;
  double mu = 0.0;
  for (const auto& f : objectives) {
    if (f->dim() != n) throw InvalidParameter("objectives disagree on dimension");
    lipschitz += f->lipschitz();
    mu += f->mu();
  }
  if (!(mu > 0.0)) throw InvalidParameter("aggregate objective is not strongly convex");

  // Nesterov's constant-momentum scheme for mu-strongly convex, L-smooth sums.
  const double q = std::sqrt(mu / lipschitz);
  const double momentum = (1.0 - q) / (1.0 + q);
  const double step = 1.0 / lipschitz;

  Vector x = Vector::Zero(n);
  Vector lookahead = x;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it <= max_iterations; ++it) {
    const Vector g = total_gradient(objectives, lookahead);
    const double norm = g.norm();
    best = std::min(best, norm);
    if (norm <= tol) return {lookahead, norm, it};
    if (it == max_iterations) break;
    const Vector next = lookahead - step * g;
    lookahead = next + momentum * (next - x);
    x = next;
  }
  throw NonConvergence("solve_reference: gradient norm " + std::to_string(best) + " above " +
                           std::to_string(tol),
                       best, max_iterations);
}

}  // namespace cfl::problem
