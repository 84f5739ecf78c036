#pragma once
// Flat `key = value` configuration text with section prefixes, command-line
// overrides and a digest of the resolved settings. The same text format is
// embedded in checkpoint files.

#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mocae/configs.hpp"
#include "mocae/phantom.hpp"

namespace mocae {

using KvMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline KvMap parse_config_text(const std::string& text) {
  KvMap kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected `key = value`, got: " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

inline std::string config_to_text(const KvMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

// FNV-1a over the canonical sorted text.
inline std::string config_digest(const KvMap& kv) {
  const std::string text = config_to_text(kv);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace cfg_detail {

inline std::string get(const KvMap& kv, const std::string& key,
                       const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

inline long long get_int(const KvMap& kv, const std::string& key, long long fb) {
  auto it = kv.find(key);
  if (it == kv.end()) return fb;
  try {
    std::size_t pos;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: " + key + " must be an integer, got `" +
                      it->second + "`");
  }
}

inline double get_double(const KvMap& kv, const std::string& key, double fb) {
  auto it = kv.find(key);
  if (it == kv.end()) return fb;
  try {
    std::size_t pos;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: " + key + " must be a number, got `" +
                      it->second + "`");
  }
}

inline bool get_bool(const KvMap& kv, const std::string& key, bool fb) {
  auto it = kv.find(key);
  if (it == kv.end()) return fb;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config: " + key + " must be true/false, got `" +
                    it->second + "`");
}

inline std::vector<int> get_int_list(const KvMap& kv, const std::string& key,
                                     std::vector<int> fb) {
  auto it = kv.find(key);
  if (it == kv.end()) return fb;
  std::vector<int> out;
  std::istringstream is(it->second);
  std::string part;
  while (std::getline(is, part, ',')) {
    try {
      out.push_back(std::stoi(trim(part)));
    } catch (...) {
      throw ConfigError("config: " + key + " must be a comma list of integers");
    }
  }
  if (out.empty())
    throw ConfigError("config: " + key + " must not be empty");
  return out;
}

}  // namespace cfg_detail

inline ModelConfig model_config_from_kv(const KvMap& kv) {
  ModelConfig d;
  ModelConfig c;
  c.input_h = static_cast<int>(cfg_detail::get_int(kv, "model.input_h", d.input_h));
  c.input_w = static_cast<int>(cfg_detail::get_int(kv, "model.input_w", d.input_w));
  c.input_channels =
      static_cast<int>(cfg_detail::get_int(kv, "model.input_channels", d.input_channels));
  c.latent_dim =
      static_cast<int>(cfg_detail::get_int(kv, "model.latent_dim", d.latent_dim));
  c.widths = cfg_detail::get_int_list(kv, "model.widths", d.widths);
  c.blocks_per_stage = static_cast<int>(
      cfg_detail::get_int(kv, "model.blocks_per_stage", d.blocks_per_stage));
  c.classifier_hidden = static_cast<int>(
      cfg_detail::get_int(kv, "model.classifier_hidden", d.classifier_hidden));
  c.dropout = cfg_detail::get_double(kv, "model.dropout", d.dropout);
  c.seed = static_cast<std::uint64_t>(
      cfg_detail::get_int(kv, "model.seed", static_cast<long long>(d.seed)));
  return c;
}

inline void model_config_to_kv(const ModelConfig& c, KvMap& kv) {
  kv["model.input_h"] = std::to_string(c.input_h);
  kv["model.input_w"] = std::to_string(c.input_w);
  kv["model.input_channels"] = std::to_string(c.input_channels);
  kv["model.latent_dim"] = std::to_string(c.latent_dim);
  std::string w;
  for (std::size_t i = 0; i < c.widths.size(); ++i)
    w += (i ? "," : "") + std::to_string(c.widths[i]);
  kv["model.widths"] = w;
  kv["model.blocks_per_stage"] = std::to_string(c.blocks_per_stage);
  kv["model.classifier_hidden"] = std::to_string(c.classifier_hidden);
  {
    std::ostringstream os;
    os.precision(17);
    os << c.dropout;
    kv["model.dropout"] = os.str();
  }
  kv["model.seed"] = std::to_string(c.seed);
}

inline TrainConfig train_config_from_kv(const KvMap& kv) {
  TrainConfig d;
  TrainConfig c;
  c.weights.gamma1 = cfg_detail::get_double(kv, "train.gamma1", d.weights.gamma1);
  c.weights.gamma2 = cfg_detail::get_double(kv, "train.gamma2", d.weights.gamma2);
  c.adam.lr = cfg_detail::get_double(kv, "train.lr", d.adam.lr);
  c.adam.beta1 = cfg_detail::get_double(kv, "train.beta1", d.adam.beta1);
  c.adam.beta2 = cfg_detail::get_double(kv, "train.beta2", d.adam.beta2);
  c.adam.eps = cfg_detail::get_double(kv, "train.eps", d.adam.eps);
  c.batch_size =
      static_cast<int>(cfg_detail::get_int(kv, "train.batch_size", d.batch_size));
  c.epochs = static_cast<int>(cfg_detail::get_int(kv, "train.epochs", d.epochs));
  c.seed = static_cast<std::uint64_t>(
      cfg_detail::get_int(kv, "train.seed", static_cast<long long>(d.seed)));
  c.split_fraction =
      cfg_detail::get_double(kv, "train.split_fraction", d.split_fraction);
  return c;
}

inline void train_config_to_kv(const TrainConfig& c, KvMap& kv) {
  std::ostringstream os;
  os.precision(17);
  auto num = [&](double v) {
    os.str("");
    os << v;
    return os.str();
  };
  kv["train.gamma1"] = num(c.weights.gamma1);
  kv["train.gamma2"] = num(c.weights.gamma2);
  kv["train.lr"] = num(c.adam.lr);
  kv["train.beta1"] = num(c.adam.beta1);
  kv["train.beta2"] = num(c.adam.beta2);
  kv["train.eps"] = num(c.adam.eps);
  kv["train.batch_size"] = std::to_string(c.batch_size);
  kv["train.epochs"] = std::to_string(c.epochs);
  kv["train.seed"] = std::to_string(c.seed);
  kv["train.split_fraction"] = num(c.split_fraction);
}

inline PhantomConfig phantom_config_from_kv(const KvMap& kv) {
  PhantomConfig d;
  PhantomConfig c;
  c.size = static_cast<int>(cfg_detail::get_int(kv, "phantom.size", d.size));
  c.slices = static_cast<int>(cfg_detail::get_int(kv, "phantom.slices", d.slices));
  c.n_cases = static_cast<int>(cfg_detail::get_int(kv, "phantom.cases", d.n_cases));
  c.tumour_probability = cfg_detail::get_double(kv, "phantom.tumour_probability",
                                                d.tumour_probability);
  return c;
}

}  // namespace mocae
