#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "stockode/model.hpp"

namespace stockode {

/// Flat key=value run configuration; '#' starts a comment, keys are unique,
/// and every key must be known to the command that consumes the file.
struct RunConfig {
  std::map<std::string, std::string> values;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text);

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key) const;  // throws when missing
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  /// Rejects keys outside the known set, naming the offenders.
  void require_known(const std::set<std::string>& known) const;

  /// One line per key, sorted; what the run logs as its resolved config.
  std::string resolved_text() const;
};

/// Keys shared by train/gradcheck configs.
const std::set<std::string>& model_config_keys();

/// Builds a ModelConfig from the model keys of a run config.
ModelConfig model_config_from(const RunConfig& rc);

}  // namespace stockode
