#include "stockode/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "stockode/errors.hpp"

namespace stockode {

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig rc;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto begin = s.find_first_not_of(" \t\r");
    const auto end = s.find_last_not_of(" \t\r");
    return begin == std::string::npos ? std::string()
                                      : s.substr(begin, end - begin + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    }
    if (!rc.values.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
  }
  return rc;
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) {
    throw ConfigError("config is missing required key '" + key + "'");
  }
  return it->second;
}

std::string RunConfig::get_or(const std::string& key,
                              const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

std::size_t RunConfig::get_size(const std::string& key,
                                std::size_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + it->second +
                      "' is not a non-negative integer");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + it->second +
                      "' is not a number");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key,
                                 std::uint64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + it->second +
                      "' is not a non-negative integer");
  }
}

void RunConfig::require_known(const std::set<std::string>& known) const {
  std::string unknown;
  for (const auto& [key, value] : values) {
    if (!known.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) {
    throw ConfigError("unknown config keys: " + unknown);
  }
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [key, value] : values) {
    out += key + "=" + value + "\n";
  }
  return out;
}

const std::set<std::string>& model_config_keys() {
  static const std::set<std::string> keys = {
      "d",          "d_prime",        "w",
      "substeps",   "beta",           "graph_layers",
      "attention_layers", "variant",  "gate_convention",
      "latent_mean", "seed",          "lr",
      "epochs",     "pair_sampling",  "split_train",
      "split_val",  "split_test"};
  return keys;
}

ModelConfig model_config_from(const RunConfig& rc) {
  ModelConfig cfg;
  cfg.d = rc.get_size("d", cfg.d);
  cfg.d_prime = rc.get_size("d_prime", cfg.d_prime);
  cfg.w = rc.get_size("w", cfg.w);
  cfg.substeps = rc.get_size("substeps", cfg.substeps);
  cfg.beta = rc.get_double("beta", cfg.beta);
  cfg.graph_layers = rc.get_size("graph_layers", cfg.graph_layers);
  cfg.attention_layers = rc.get_size("attention_layers", cfg.attention_layers);
  cfg.variant = variant_from_name(rc.get_or("variant", "full"));
  const std::string gate = rc.get_or("gate_convention", "keep_previous");
  if (gate == "keep_previous") {
    cfg.gate_convention = GateConvention::kGateKeepsPrevious;
  } else if (gate == "keep_candidate") {
    cfg.gate_convention = GateConvention::kGateKeepsCandidate;
  } else {
    throw ConfigError("gate_convention must be keep_previous|keep_candidate");
  }
  const std::string lm = rc.get_or("latent_mean", "hidden");
  if (lm == "hidden") {
    cfg.latent_mean = LatentMean::kHidden;
  } else if (lm == "mu") {
    cfg.latent_mean = LatentMean::kMu;
  } else {
    throw ConfigError("latent_mean must be hidden|mu");
  }
  cfg.seed = rc.get_u64("seed", cfg.seed);
  cfg.lr = rc.get_double("lr", cfg.lr);
  cfg.epochs = rc.get_size("epochs", cfg.epochs);
  cfg.pair_sampling = rc.get_size("pair_sampling", cfg.pair_sampling);
  cfg.split_counts = {rc.get_size("split_train", 0),
                      rc.get_size("split_val", 0),
                      rc.get_size("split_test", 0)};
  cfg.validate();
  return cfg;
}

}  // namespace stockode
