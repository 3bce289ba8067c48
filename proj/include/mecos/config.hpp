#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mecos/data.hpp"
#include "mecos/encoder.hpp"
#include "mecos/model.hpp"

namespace mecos {

enum class Precision { f32, f64 };

/// Where evaluation negatives come from. `automatic` uses the split alone
/// when it can supply N_eval - 1 negatives, and otherwise adds the rich
/// (non-meta) items, which are never targets during meta-training either.
enum class NegativePool { automatic, split, split_and_rich };

struct Hyperparams {
  std::size_t n_train = 16;
  std::size_t n_eval = 128;
  std::size_t k = 3;
  std::size_t steps = 2;
  std::size_t dim = 100;
  std::size_t ffn_depth = 1;
  std::size_t max_len = kDefaultMaxPrefix;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t episodes_per_epoch = 200;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  Variant variant = Variant::full;
  Precision precision = Precision::f32;
  AttentionActivation attention = AttentionActivation::sigmoid;
  std::size_t valid_queries = 256;
  std::size_t test_queries = 1000;
  double cold_fraction = 0.2;
  SplitRatios ratios;
  NegativePool negative_pool = NegativePool::automatic;

  void validate() const {
    if (n_eval < 2) throw ConfigError("n_eval must be at least 2");
    if (n_train < 2) throw ConfigError("n_train must be at least 2");
    if (k < 1) throw ConfigError("k must be at least 1");
    if (dim < 1) throw ConfigError("dim must be at least 1");
    if (ffn_depth < 1) throw ConfigError("ffn_depth must be at least 1");
    if (max_len < 1) throw ConfigError("max_len must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) throw ConfigError("cold_fraction must lie in (0, 1)");
  }

  /// Copy whose recorded step count reflects the variant (variant2 and
  /// variant3 run with t = 0).
  Hyperparams resolved() const {
    Hyperparams out = *this;
    out.steps = pipeline().steps;
    return out;
  }

  /// Pipeline after the ablation switch is applied.
  Pipeline pipeline() const {
    Pipeline base;
    base.encoder.activation = attention;
    base.steps = steps;
    return apply_variant(variant, base);
  }
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Flat `key = value` text; `#` starts a comment line.
inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

namespace detail {

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || v.front() == '-') throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return static_cast<std::size_t>(out);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

}  // namespace detail

/// Applies one key; returns false when the key is not a hyperparameter.
inline bool apply_hyperparam(Hyperparams& h, const std::string& key, const std::string& v) {
  using detail::to_double;
  using detail::to_size;
  if (key == "n_train") h.n_train = to_size(key, v);
  else if (key == "n_eval") h.n_eval = to_size(key, v);
  else if (key == "k") h.k = to_size(key, v);
  else if (key == "t" || key == "steps") h.steps = to_size(key, v);
  else if (key == "d" || key == "dim") h.dim = to_size(key, v);
  else if (key == "ffn_depth") h.ffn_depth = to_size(key, v);
  else if (key == "max_len") h.max_len = to_size(key, v);
  else if (key == "learning_rate" || key == "lr") h.learning_rate = to_double(key, v);
  else if (key == "epochs") h.epochs = to_size(key, v);
  else if (key == "episodes_per_epoch") h.episodes_per_epoch = to_size(key, v);
  else if (key == "patience") h.patience = to_size(key, v);
  else if (key == "seed") h.seed = to_size(key, v);
  else if (key == "variant") h.variant = parse_variant(v);
  else if (key == "precision") {
    if (v == "f32" || v == "32") h.precision = Precision::f32;
    else if (v == "f64" || v == "64") h.precision = Precision::f64;
    else throw ConfigError("precision must be f32 or f64");
  } else if (key == "attention") {
    if (v == "sigmoid") h.attention = AttentionActivation::sigmoid;
    else if (v == "linear") h.attention = AttentionActivation::linear;
    else throw ConfigError("attention must be sigmoid or linear");
  } else if (key == "matching") {
    if (v != "per-candidate") throw ConfigError("matching: only 'per-candidate' refinement is implemented");
  } else if (key == "valid_queries") h.valid_queries = to_size(key, v);
  else if (key == "test_queries") h.test_queries = to_size(key, v);
  else if (key == "cold_fraction") h.cold_fraction = to_double(key, v);
  else if (key == "ratio_train") h.ratios.train = to_double(key, v);
  else if (key == "ratio_valid") h.ratios.valid = to_double(key, v);
  else if (key == "ratio_test") h.ratios.test = to_double(key, v);
  else if (key == "negative_pool") {
    if (v == "auto") h.negative_pool = NegativePool::automatic;
    else if (v == "split") h.negative_pool = NegativePool::split;
    else if (v == "split+rich") h.negative_pool = NegativePool::split_and_rich;
    else throw ConfigError("negative_pool must be auto, split or split+rich");
  } else {
    return false;
  }
  return true;
}

inline std::string to_config_text(const Hyperparams& h) {
  std::ostringstream out;
  auto pool = h.negative_pool == NegativePool::automatic ? "auto"
              : h.negative_pool == NegativePool::split   ? "split"
                                                         : "split+rich";
  out << "n_train = " << h.n_train << '\n'
      << "n_eval = " << h.n_eval << '\n'
      << "k = " << h.k << '\n'
      << "t = " << h.steps << '\n'
      << "d = " << h.dim << '\n'
      << "ffn_depth = " << h.ffn_depth << '\n'
      << "max_len = " << h.max_len << '\n'
      << "learning_rate = " << format_double(h.learning_rate) << '\n'
      << "epochs = " << h.epochs << '\n'
      << "episodes_per_epoch = " << h.episodes_per_epoch << '\n'
      << "patience = " << h.patience << '\n'
      << "seed = " << h.seed << '\n'
      << "variant = " << to_string(h.variant) << '\n'
      << "precision = " << (h.precision == Precision::f32 ? "f32" : "f64") << '\n'
      << "attention = " << (h.attention == AttentionActivation::sigmoid ? "sigmoid" : "linear") << '\n'
      << "matching = per-candidate\n"
      << "valid_queries = " << h.valid_queries << '\n'
      << "test_queries = " << h.test_queries << '\n'
      << "cold_fraction = " << format_double(h.cold_fraction) << '\n'
      << "ratio_train = " << format_double(h.ratios.train) << '\n'
      << "ratio_valid = " << format_double(h.ratios.valid) << '\n'
      << "ratio_test = " << format_double(h.ratios.test) << '\n'
      << "negative_pool = " << pool << '\n';
  return out.str();
}

inline Hyperparams hyperparams_from_text(const std::string& text) {
  Hyperparams h;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (!apply_hyperparam(h, key, value)) throw ConfigError("unknown hyperparameter '" + key + "'");
  }
  return h;
}

}  // namespace mecos
