#include "cfl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "cfl/baselines.hpp"
#include "cfl/cfl_admm.hpp"
#include "cfl/errors.hpp"

namespace cfl::harness {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < size; ++k) {
      hash_ ^= p[k];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void real(double v) { bytes(&v, sizeof v); }
  void integer(std::uint64_t v) { bytes(&v, sizeof v); }
  template <typename Derived>
  void matrix(const Eigen::DenseBase<Derived>& m) {
    integer(static_cast<std::uint64_t>(m.rows()));
    integer(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) real(m(r, c));
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::size_t> expand_users(const ExperimentConfig& c) {
  if (c.users_per_server.size() == 1) return std::vector<std::size_t>(c.servers, c.users_per_server[0]);
  return c.users_per_server;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_edges(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError("edge '" + item + "' is not of the form a-b");
    try {
      edges.emplace_back(std::stoul(item.substr(0, dash)), std::stoul(item.substr(dash + 1)));
    } catch (const std::exception&) {
      throw ConfigError("edge '" + item + "' is not of the form a-b");
    }
  }
  return edges;
}

TraceRecord make_record(std::size_t iteration, const RowStack& user_models, const RowStack& y,
                        const Instance& inst, std::uint64_t messages, double wall) {
  TraceRecord r;
  r.iteration = iteration;
  r.optimality_gap = optimality_gap(user_models, inst.x_star, inst.graph);
  double objective = 0.0;
  for (std::size_t u = 0; u < inst.objectives.size(); ++u) {
    objective += inst.objectives[u]->loss(user_models.row(idx(u)).transpose());
  }
  r.global_objective = objective;
  const auto res = admm::consensus_residuals(user_models, y, inst.graph);
  r.consensus_user_es = res.user_server;
  r.consensus_es_es = res.server_server;
  r.cumulative_messages = static_cast<double>(messages);
  r.wall_time = wall;
  return r;
}

double final_gap_or_inf(const Trace& t) {
  if (t.empty()) return std::numeric_limits<double>::infinity();
  const double g = t.back().optimality_gap;
  return std::isfinite(g) ? g : std::numeric_limits<double>::infinity();
}

std::string epsilon_label(const CellSpec& spec) {
  if (spec.algorithm != Algorithm::cfl_admm) return "-";
  return spec.epsilon.is_decreasing() ? "decreasing" : format_double(spec.epsilon.constant_value());
}

void write_rows(std::ostream& out, const CellSpec& spec, const std::string& repeat, const Trace& trace) {
  const std::string prefix = to_string(spec.algorithm) + "," + format_double(spec.alpha) + "," +
                             epsilon_label(spec) + "," +
                             (spec.algorithm == Algorithm::cfl_admm ? std::string("-") : format_double(spec.stepsize)) +
                             "," + repeat + ",";
  for (const auto& r : trace) {
    out << prefix << r.iteration << ',' << format_double(r.optimality_gap) << ','
        << format_double(r.global_objective) << ',' << format_double(r.consensus_user_es) << ','
        << format_double(r.consensus_es_es) << ',' << format_double(r.cumulative_messages) << ','
        << format_double(r.wall_time) << ",ok\n";
  }
}

void write_failure(std::ostream& out, const CellSpec& spec, const std::string& message) {
  std::string clean = message;
  std::replace(clean.begin(), clean.end(), ',', ';');
  std::replace(clean.begin(), clean.end(), '\n', ' ');
  out << to_string(spec.algorithm) << ',' << format_double(spec.alpha) << ',' << epsilon_label(spec)
      << ",-,-,0,nan,nan,nan,nan,nan,nan,failed: " << clean << '\n';
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_header() {
  return "algorithm,alpha,epsilon,stepsize,repeat,iteration,optimality_gap,global_objective,"
         "consensus_user_es,consensus_es_es,cumulative_messages,wall_time,status";
}

double optimality_gap(const RowStack& user_models, const Vector& x_star, const topology::EsGraph& graph) {
  const double norm2 = x_star.squaredNorm();
  if (!(norm2 > 0.0)) throw InvalidParameter("optimality gap undefined for x* = 0");
  if (user_models.rows() != idx(graph.total_users()) || user_models.cols() != x_star.size()) {
    throw InvalidParameter("user model stack does not match graph and x*");
  }
  const double total = (user_models.rowwise() - x_star.transpose()).squaredNorm();
  return total / (norm2 * static_cast<double>(graph.total_users()));
}

topology::EsGraph build_graph(const ExperimentConfig& c) {
  auto users = expand_users(c);
  if (c.topology == "ring") return topology::make_ring(c.servers, std::move(users));
  if (c.topology == "path") return topology::make_path(c.servers, std::move(users));
  if (c.topology == "star") return topology::make_star(c.servers, std::move(users));
  if (c.topology == "erdos_renyi") {
    return topology::make_erdos_renyi(c.servers, c.er_probability, c.topology_seed, std::move(users));
  }
  if (c.topology == "edges") return topology::EsGraph(c.servers, parse_edges(c.edges), std::move(users));
  throw ConfigError("unknown topology '" + c.topology + "'");
}

std::uint64_t content_hash(std::span<const problem::ObjectivePtr> objectives, double tolerance) {
  Fnv1a h;
  h.integer(objectives.size());
  for (const auto& f : objectives) {
    if (const auto* lr = dynamic_cast<const problem::LogisticObjective*>(f.get())) {
      h.integer(1);
      h.real(lr->ridge_weight());
      h.matrix(lr->features());
      h.matrix(lr->labels());
    } else if (const auto* q = dynamic_cast<const problem::QuadraticObjective*>(f.get())) {
      h.integer(2);
      h.matrix(q->curvature());
      h.matrix(q->center());
    } else {
      throw InvalidParameter("cannot hash an unknown objective type");
    }
  }
  h.real(tolerance);
  return h.value();
}

std::filesystem::path reference_cache_path(const std::filesystem::path& cache_dir, std::uint64_t hash) {
  return cache_dir / ("xstar_" + hex(hash) + ".txt");
}

std::optional<problem::ReferenceSolution> read_reference_cache(const std::filesystem::path& path,
                                                               std::uint64_t hash) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  problem::ReferenceSolution sol;
  bool hash_ok = false;
  bool have_x = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) return std::nullopt;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "hash") {
      hash_ok = value == hex(hash);
    } else if (key == "iterations") {
      sol.iterations = std::stoull(value);
    } else if (key == "gradient_norm") {
      sol.gradient_norm = std::strtod(value.c_str(), nullptr);
    } else if (key == "x") {
      std::vector<double> vals;
      std::istringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) vals.push_back(std::strtod(item.c_str(), nullptr));
      sol.x = Eigen::Map<Vector>(vals.data(), idx(vals.size()));
      have_x = true;
    }
  }
  if (!hash_ok || !have_x) return std::nullopt;
  return sol;
}

void write_reference_cache(const std::filesystem::path& path, std::uint64_t hash, double tolerance,
                           const problem::ReferenceSolution& solution) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write then rename so concurrent readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write reference cache " + path.string());
    out << "# reference optimum of the aggregate objective\n";
    out << "hash=" << hex(hash) << '\n';
    out << "tolerance=" << format_double(tolerance) << '\n';
    out << "iterations=" << solution.iterations << '\n';
    out << "gradient_norm=" << format_double(solution.gradient_norm) << '\n';
    out << "dim=" << solution.x.size() << '\n';
    out << "x=";
    for (Eigen::Index k = 0; k < solution.x.size(); ++k) {
      if (k) out << ',';
      out << format_double(solution.x(k));
    }
    out << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Instance build_instance(const ExperimentConfig& c) {
  c.validate();
  auto graph = build_graph(c);
  std::vector<problem::Sample> samples;
  if (c.dataset == "csv") {
    samples = problem::load_labelled_csv(c.csv_path, c.csv_feature_columns, c.csv_skip_header);
  } else {
    problem::SyntheticSpec spec;
    spec.dim = c.dim;
    spec.feature_scale = c.feature_scale;
    spec.label_noise = c.label_noise;
    spec.seed = c.data_seed;
    samples = problem::generate_synthetic(spec, c.samples_per_user * graph.total_users());
  }
  const auto shards = problem::partition(samples, graph, c.samples_per_user, c.data_seed);
  auto objectives = problem::make_logistic_objectives(shards, c.ridge);

  const auto hash = content_hash(objectives, c.reference_tol);
  const auto cache = reference_cache_path(c.cache_dir, hash);
  auto solution = read_reference_cache(cache, hash);
  if (!solution) {
    solution = problem::solve_reference(objectives, c.reference_tol);
    write_reference_cache(cache, hash, c.reference_tol, *solution);
  }
  return Instance{std::move(graph), std::move(objectives), solution->x, hash, solution->iterations,
                  solution->gradient_norm};
}

Trace run_cell(const Instance& inst, const CellSpec& spec) {
  Trace trace;
  trace.reserve(spec.iterations);
  const auto start = std::chrono::steady_clock::now();
  auto wall = [&] {
    if (!spec.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const admm::CounterRng rng(spec.seed);
  const auto& g = inst.graph;
  const auto n = inst.x_star.size();

  switch (spec.algorithm) {
    case Algorithm::cfl_admm: {
      admm::RunConfig config;
      config.sigma1 = spec.sigma1;
      config.sigma2 = spec.sigma2;
      config.alpha = spec.alpha;
      config.epsilon = spec.epsilon;
      config.max_iterations = spec.iterations;
      config.max_inner = spec.max_inner;
      config.seed = spec.seed;
      admm::run(inst.objectives, g, config, [&](const admm::CflState& s, const admm::StepStats&) {
        trace.push_back(make_record(s.iteration, s.x, s.y, inst, s.messages_sent, wall()));
      });
      break;
    }
    case Algorithm::gt_saga: {
      const auto w = baselines::metropolis_weights(g);
      auto s = baselines::gt_saga_init(inst.objectives, g);
      for (std::size_t k = 0; k < spec.iterations; ++k) {
        baselines::gt_saga_step(s, inst.objectives, g, w, spec.stepsize, spec.alpha, rng);
        trace.push_back(make_record(s.iteration, baselines::broadcast_to_users(s.y, g), s.y, inst,
                                    s.messages_sent, wall()));
      }
      break;
    }
    case Algorithm::d_sgd: {
      const auto w = baselines::metropolis_weights(g);
      auto s = baselines::DsgdState::zeros(g, n);
      for (std::size_t k = 0; k < spec.iterations; ++k) {
        baselines::d_sgd_step(s, inst.objectives, g, w, spec.stepsize, spec.alpha, rng);
        trace.push_back(make_record(s.iteration, baselines::broadcast_to_users(s.y, g), s.y, inst,
                                    s.messages_sent, wall()));
      }
      break;
    }
  }
  return trace;
}

Trace mean_trace(std::span<const Trace> traces) {
  if (traces.empty()) throw InvalidParameter("mean of zero traces");
  const auto len = traces.front().size();
  for (const auto& t : traces) {
    if (t.size() != len) throw InvalidParameter("traces differ in length");
  }
  Trace mean(len);
  const double count = static_cast<double>(traces.size());
  for (std::size_t k = 0; k < len; ++k) {
    TraceRecord m;
    m.iteration = traces.front()[k].iteration;
    for (const auto& t : traces) {
      m.optimality_gap += t[k].optimality_gap;
      m.global_objective += t[k].global_objective;
      m.consensus_user_es += t[k].consensus_user_es;
      m.consensus_es_es += t[k].consensus_es_es;
      m.cumulative_messages += t[k].cumulative_messages;
      m.wall_time += t[k].wall_time;
    }
    m.optimality_gap /= count;
    m.global_objective /= count;
    m.consensus_user_es /= count;
    m.consensus_es_es /= count;
    m.cumulative_messages /= count;
    m.wall_time /= count;
    mean[k] = m;
  }
  return mean;
}

std::optional<std::size_t> first_iteration_below(const Trace& trace, double threshold) {
  for (const auto& r : trace) {
    if (r.optimality_gap <= threshold) return r.iteration;
  }
  return std::nullopt;
}

std::vector<Trace> run_repeats(const Instance& inst, const CellSpec& spec, std::size_t repeats) {
  std::vector<Trace> traces;
  traces.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    CellSpec s = spec;
    s.seed = spec.seed + r;
    traces.push_back(run_cell(inst, s));
  }
  return traces;
}

TunedCell tune_stepsize(const Instance& inst, CellSpec spec, std::span<const double> grid,
                        std::size_t repeats, double target) {
  if (grid.empty()) throw InvalidParameter("empty stepsize grid");
  std::optional<TunedCell> best;
  std::size_t best_hit = std::numeric_limits<std::size_t>::max();
  double best_final = std::numeric_limits<double>::infinity();
  for (double gamma : grid) {
    spec.stepsize = gamma;
    TunedCell cell{gamma, run_repeats(inst, spec, repeats), {}};
    cell.mean = mean_trace(cell.traces);
    const auto hit = first_iteration_below(cell.mean, target).value_or(std::numeric_limits<std::size_t>::max());
    const double fin = final_gap_or_inf(cell.mean);
    if (!best || hit < best_hit || (hit == best_hit && fin < best_final)) {
      best_hit = hit;
      best_final = fin;
      best = std::move(cell);
    }
  }
  return std::move(*best);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto inst = build_instance(config);
  ExperimentResult result;
  result.trace_path = config.resolved_output();
  result.mean_path = result.trace_path;
  result.mean_path.replace_filename(result.trace_path.stem().string() + "_mean" +
                                    result.trace_path.extension().string());
  if (result.trace_path.has_parent_path()) std::filesystem::create_directories(result.trace_path.parent_path());

  std::ostringstream header;
  header << "# topology=" << config.topology << " servers=" << inst.graph.num_servers()
         << " edges=" << inst.graph.describe_edges() << " users=" << inst.graph.total_users() << '\n';
  header << "# dataset=" << config.dataset;
  if (config.dataset == "csv") {
    header << " path=" << config.csv_path.string() << " scaling=minmax_per_column_constant_to_0 bias=1";
  } else {
    header << " dim=" << config.dim << " feature_scale=" << format_double(config.feature_scale)
           << " label_noise=" << format_double(config.label_noise);
  }
  header << " samples_per_user=" << config.samples_per_user << " data_seed=" << config.data_seed
         << " ridge=" << format_double(config.ridge) << '\n';
  header << "# sigma1=" << format_double(config.sigma1) << " sigma2=" << format_double(config.sigma2)
         << " seed=" << config.seed << " repeats=" << config.repeats << " iterations=" << config.iterations
         << " max_inner=" << config.max_inner << '\n';
  header << "# reference hash=" << hex(inst.content_hash) << " tol=" << format_double(config.reference_tol)
         << " iterations=" << inst.reference_iterations
         << " gradient_norm=" << format_double(inst.reference_gradient_norm) << '\n';
  header << "# stepsize_grid=";
  for (std::size_t k = 0; k < config.stepsizes.size(); ++k) {
    header << (k ? ";" : "") << format_double(config.stepsizes[k]);
  }
  header << " tune_target=" << format_double(config.tune_target) << '\n';

  std::ofstream traces(result.trace_path);
  std::ofstream means(result.mean_path);
  if (!traces || !means) throw ConfigError("cannot write to " + result.trace_path.string());
  traces << header.str() << csv_header() << '\n';
  means << header.str() << csv_header() << '\n';

  for (auto algorithm : config.algorithms) {
    for (double alpha : config.alphas) {
      const bool is_cfl = algorithm == Algorithm::cfl_admm;
      const std::size_t eps_cells = is_cfl ? config.epsilons.size() : 1;
      for (std::size_t e = 0; e < eps_cells; ++e) {
        CellSpec spec;
        spec.algorithm = algorithm;
        spec.alpha = alpha;
        spec.epsilon = config.epsilons[e];
        spec.sigma1 = config.sigma1;
        spec.sigma2 = config.sigma2;
        spec.iterations = config.iterations;
        spec.max_inner = config.max_inner;
        spec.seed = config.seed;
        spec.record_wall_time = config.record_wall_time;
        ++result.cells;
        try {
          std::vector<Trace> runs;
          Trace mean;
          if (is_cfl) {
            runs = run_repeats(inst, spec, config.repeats);
            mean = mean_trace(runs);
          } else {
            auto tuned = tune_stepsize(inst, spec, config.stepsizes, config.repeats, config.tune_target);
            spec.stepsize = tuned.stepsize;
            runs = std::move(tuned.traces);
            mean = std::move(tuned.mean);
          }
          for (std::size_t r = 0; r < runs.size(); ++r) write_rows(traces, spec, std::to_string(r), runs[r]);
          write_rows(means, spec, "mean", mean);
        } catch (const std::exception& ex) {
          ++result.failed_cells;
          write_failure(traces, spec, ex.what());
          write_failure(means, spec, ex.what());
        }
      }
    }
  }
  return result;
}

}  // namespace cfl::harness
