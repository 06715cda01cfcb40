#include "cfl/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cfl/errors.hpp"

namespace cfl::harness {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return d;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ConfigError(key + ": not a nonnegative integer: '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& value, F&& convert) {
  std::vector<T> out;
  for (const auto& item : split_list(value)) out.push_back(convert(key, item));
  if (out.empty()) throw ConfigError(key + ": list must not be empty");
  return out;
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::cfl_admm: return "cfl-admm";
    case Algorithm::gt_saga: return "gt-saga";
    case Algorithm::d_sgd: return "d-sgd";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "cfl-admm") return Algorithm::cfl_admm;
  if (name == "gt-saga") return Algorithm::gt_saga;
  if (name == "d-sgd") return Algorithm::d_sgd;
  throw ConfigError("unknown algorithm '" + name + "' (cfl-admm | gt-saga | d-sgd)");
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const auto key = trim(raw_key);
  const auto value = trim(raw_value);
  if (key == "topology") {
    topology = value;
  } else if (key == "servers") {
    servers = to_unsigned(key, value);
  } else if (key == "users_per_server") {
    users_per_server = parse_list<std::size_t>(key, value, to_unsigned);
  } else if (key == "edges") {
    edges = value;
  } else if (key == "er_probability") {
    er_probability = to_double(key, value);
  } else if (key == "topology_seed") {
    topology_seed = to_unsigned(key, value);
  } else if (key == "dataset") {
    dataset = value;
  } else if (key == "csv_path") {
    csv_path = value;
  } else if (key == "csv_skip_header") {
    csv_skip_header = to_bool(key, value);
  } else if (key == "csv_feature_columns") {
    csv_feature_columns = to_unsigned(key, value);
  } else if (key == "dim") {
    dim = static_cast<long>(to_unsigned(key, value));
  } else if (key == "feature_scale") {
    feature_scale = to_double(key, value);
  } else if (key == "label_noise") {
    label_noise = to_double(key, value);
  } else if (key == "data_seed") {
    data_seed = to_unsigned(key, value);
  } else if (key == "samples_per_user") {
    samples_per_user = to_unsigned(key, value);
  } else if (key == "ridge") {
    ridge = to_double(key, value);
  } else if (key == "algorithm" || key == "algorithms") {
    algorithms = parse_list<Algorithm>(key, value,
                                       [](const std::string&, const std::string& v) { return parse_algorithm(v); });
  } else if (key == "sigma1") {
    sigma1 = to_double(key, value);
  } else if (key == "sigma2") {
    sigma2 = to_double(key, value);
  } else if (key == "alpha" || key == "alphas") {
    alphas = parse_list<double>(key, value, to_double);
  } else if (key == "epsilon" || key == "epsilons") {
    epsilons = parse_list<admm::EpsilonSchedule>(
        key, value, [](const std::string& k, const std::string& v) {
          if (v == "decreasing") return admm::EpsilonSchedule::decreasing();
          const double e = to_double(k, v);
          if (e < 0.0) throw ConfigError(k + ": epsilon must be nonnegative");
          return admm::EpsilonSchedule::constant(e);
        });
  } else if (key == "iterations") {
    iterations = to_unsigned(key, value);
  } else if (key == "max_inner") {
    max_inner = to_unsigned(key, value);
  } else if (key == "seed") {
    seed = to_unsigned(key, value);
    seed_set = true;
  } else if (key == "repeats") {
    repeats = to_unsigned(key, value);
  } else if (key == "stepsizes") {
    stepsizes = parse_list<double>(key, value, to_double);
  } else if (key == "tune_target") {
    tune_target = to_double(key, value);
  } else if (key == "output") {
    output = value;
  } else if (key == "cache_dir") {
    cache_dir = value;
  } else if (key == "reference_tol") {
    reference_tol = to_double(key, value);
  } else if (key == "record_wall_time") {
    record_wall_time = to_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw ConfigError("no dataset: set dataset = synthetic or dataset = csv");
  if (dataset != "synthetic" && dataset != "csv") {
    throw ConfigError("dataset must be synthetic or csv, got '" + dataset + "'");
  }
  if (dataset == "csv") {
    if (csv_path.empty()) throw ConfigError("dataset = csv requires csv_path");
    if (!std::filesystem::exists(csv_path)) throw ConfigError("csv_path does not exist: " + csv_path.string());
  }
  if (users_per_server.size() != 1 && users_per_server.size() != servers) {
    throw ConfigError("users_per_server needs 1 or `servers` entries");
  }
  if (alphas.empty() || epsilons.empty() || algorithms.empty() || stepsizes.empty()) {
    throw ConfigError("sweep lists must be nonempty");
  }
  for (double a : alphas) {
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha values must lie in (0, 1]");
  }
  if (!(sigma1 > 0.0 && sigma2 > 0.0)) throw ConfigError("sigma1 and sigma2 must be positive");
  if (iterations == 0) throw ConfigError("iterations must be positive");
  if (repeats == 0) throw ConfigError("repeats must be positive");
  if (samples_per_user == 0) throw ConfigError("samples_per_user must be positive");
  if (!(ridge > 0.0)) throw ConfigError("ridge must be positive");
  if (!(reference_tol > 0.0)) throw ConfigError("reference_tol must be positive");
}

std::filesystem::path ExperimentConfig::resolved_output() const {
  if (const char* dir = std::getenv("CFL_OUTPUT_DIR"); dir && *dir) {
    return std::filesystem::path(dir) / output.filename();
  }
  return output;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      const auto [key, value] = split_assignment(line);
      config.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace cfl::harness
