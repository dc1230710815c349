#pragma once

#include "mesorm/harness.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mesorm {

/// Flat "section.key" -> value view of a config file, restricted to the
/// known schema. Unknown sections or keys are usage errors.
class ConfigValues {
 public:
  /// Schema defaults.
  ConfigValues();

  static ConfigValues parse(const std::string& ini_text, const std::string& origin = "<string>");
  static ConfigValues load(const std::filesystem::path& path);

  /// "section.key=value"; the key must exist in the schema.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has_value(const std::string& key) const { return !get(key).empty(); }

  /// Canonical INI text of every key, in schema order.
  std::string to_ini() const;

  static const std::vector<std::pair<std::string, std::string>>& schema();

 private:
  std::map<std::string, std::string> values_;
};

struct RunConfig {
  ExperimentConfig experiment;
  std::filesystem::path output_dir = "runs";
  int formats = static_cast<int>(ExportFormat::all);
  std::string snapshot;
};

/// Typed view; throws UsageError naming the offending key.
RunConfig resolve(const ConfigValues& values);

/// "x:w, y:w, ..." (weights are normalized).
AtomicMeasure parse_atoms(const std::string& text);

}  // namespace mesorm
