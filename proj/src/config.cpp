#include "aadam/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <sstream>

#include "aadam/corpus.hpp"
#include "aadam/error.hpp"
#include "aadam/hashing.hpp"

namespace aadam {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.values_ = {
      {"global.seed", "13"},
      {"global.run_root", "runs"},
      {"model.architecture", "cross"},
      {"model.d_model", "64"},
      {"model.n_layers", "2"},
      {"model.n_heads", "4"},
      {"model.d_ff", "128"},
      {"model.max_len", "64"},
      {"model.adapter_bottleneck", "16"},
      {"model.dropout", "0"},
      {"model.vocab_min_freq", "1"},
      {"model.vocab_max_size", "30000"},
      {"training.mode", "full"},
      {"training.batch_size", "16"},
      {"training.weight_decay", "0"},
      {"tapt.enabled", "false"},
      {"tapt.learning_rate", "5e-5"},
      {"tapt.epochs", "10"},
      {"warmup.source", "none"},
      {"warmup.epochs", "6"},
      {"final.epochs", "6"},
      {"final.grid", "2e-5,5e-5"},
      {"adapter.epochs", "15"},
      {"adapter.grid", "1e-4,2e-4,5e-5"},
      {"augmentation.client", "mock"},
      {"augmentation.mock_seed", "7"},
      {"augmentation.in_flight", "4"},
      {"augmentation.max_batch", "32"},
      {"augmentation.sources", "semrel"},
      {"transfer.strategy", "dev_performance"},
      {"transfer.adapter_type", "base"},
      {"evaluation.bands", "0,0.25,0.5,0.75,1"},
      {"evaluation.k", "10"},
  };
  return c;
}

void Config::merge_ini(std::string_view text, const std::string& source) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError(source + ", line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      values_[section] = trim(body.data());
      continue;
    }
    for (const auto& [key, value] : body) values_[section + "." + key] = trim(value.data());
  }
}

void Config::merge_file(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("config file: ") + e.what());
  }
  merge_ini(text, path);
}

void Config::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("expected section.key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos) throw UsageError("key '" + key + "' needs a section, like model.d_model");
  values_[key] = trim(assignment.substr(eq + 1));
}

bool Config::has(const std::string& key) const {
  auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::string Config::require(const std::string& key) const {
  if (auto v = get(key)) return *v;
  throw UsageError("missing configuration key '" + key + "'");
}

double Config::get_double(const std::string& key) const {
  const std::string v = require(key);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw UsageError("configuration key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

std::size_t Config::get_size(const std::string& key) const {
  const std::string v = require(key);
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw UsageError("configuration key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string v = require(key);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw UsageError("configuration key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = require(key);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw UsageError("configuration key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const auto v = get(key);
  if (!v) return out;
  std::size_t start = 0;
  while (start <= v->size()) {
    std::size_t end = v->find(',', start);
    if (end == std::string::npos) end = v->size();
    std::string item = trim(std::string_view(*v).substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = end + 1;
  }
  return out;
}

std::map<std::string, std::string> Config::section(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  const std::string p = prefix + ".";
  for (const auto& [k, v] : values_) {
    if (k.rfind(p, 0) == 0) out[k.substr(p.size())] = v;
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string Config::hash() const { return short_hash(sha256_hex(canonical())); }

std::string Config::to_ini() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  std::string out;
  for (const auto& [s, body] : sections) {
    out += (out.empty() ? "" : "\n") + std::string("[") + s + "]\n";
    for (const auto& [k, v] : body) out += k + " = " + v + "\n";
  }
  return out;
}

Config load_config(const std::optional<std::string>& config_file, const std::optional<std::string>& env_file,
                   const std::vector<std::string>& assignments) {
  Config c = Config::defaults();
  if (config_file) c.merge_file(*config_file);
  if (env_file && !env_file->empty()) c.merge_file(*env_file);
  for (const auto& a : assignments) c.set_assignment(a);
  return c;
}

}  // namespace aadam
