#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aadam {

/// Flat "section.key" -> value map built from INI layers.
///
/// Layers apply in this order, later ones winning: built-in defaults, the
/// --config file, the file named by AADAM_CONFIG, then --set key=value flags.
class Config {
 public:
  /// Built-in defaults (batch 16, MLM 10 epochs at 5e-5, fine-tuning 6
  /// epochs over {2e-5, 5e-5}, adapters 15 epochs over {1e-4, 2e-4, 5e-5}).
  static Config defaults();

  /// Merges INI text; `source` names the origin in error messages.
  void merge_ini(std::string_view text, const std::string& source);
  void merge_file(const std::string& path);
  /// Applies "section.key=value".
  void set_assignment(std::string_view assignment);
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  /// Throws UsageError naming the missing key.
  std::string require(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Comma-separated list with blanks trimmed; empty value gives an empty list.
  std::vector<std::string> get_list(const std::string& key) const;
  /// Keys under "prefix." with the prefix stripped.
  std::map<std::string, std::string> section(const std::string& prefix) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Sorted "key=value" lines; the input to hash().
  std::string canonical() const;
  std::string hash() const;
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Applies the layering rule above; `env_file` is normally getenv("AADAM_CONFIG").
Config load_config(const std::optional<std::string>& config_file, const std::optional<std::string>& env_file,
                   const std::vector<std::string>& assignments);

}  // namespace aadam
