#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "mecos/data.hpp"
#include "mecos/rng.hpp"

namespace mecos {

struct SynthConfig {
  std::size_t n_clusters = 8;
  std::size_t items_per_cluster = 64;
  std::size_t n_sequences = 6000;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  double within_cluster_prob = 0.9;

  void validate() const {
    if (n_clusters == 0 || items_per_cluster == 0 || n_sequences == 0) throw ConfigError("synthetic sizes must be positive");
    if (min_len < 2 || max_len < min_len) throw ConfigError("synthetic sequence lengths need 2 <= min_len <= max_len");
    if (!(within_cluster_prob >= 0.0 && within_cluster_prob <= 1.0)) throw ConfigError("within_cluster_prob must lie in [0, 1]");
  }

  std::size_t n_items() const { return n_clusters * items_per_cluster; }
};

inline std::string synth_item_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "i%05zu", i);
  return buf;
}

inline std::string synth_user_id(std::size_t u) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%06zu", u);
  return buf;
}

/// Item i belongs to cluster i / items_per_cluster.
inline std::size_t synth_cluster_of(const SynthConfig& cfg, std::size_t item) { return item / cfg.items_per_cluster; }

/// Clustered interaction log: each sequence has a latent home cluster; each
/// event is a uniform item of that cluster with probability
/// `within_cluster_prob`, otherwise a uniform item from the whole catalogue.
/// Returns raw events; `home_clusters` (optional) receives each user's cluster.
inline std::vector<Interaction> synth_events(const SynthConfig& cfg, Rng& rng,
                                             std::vector<std::size_t>* home_clusters = nullptr) {
  cfg.validate();
  std::vector<Interaction> rows;
  for (std::size_t u = 0; u < cfg.n_sequences; ++u) {
    const std::size_t home = rng.index(cfg.n_clusters);
    if (home_clusters) home_clusters->push_back(home);
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(cfg.min_len),
                                                          static_cast<std::int64_t>(cfg.max_len)));
    const std::string user = synth_user_id(u);
    for (std::size_t pos = 0; pos < len; ++pos) {
      std::size_t item;
      if (rng.bernoulli(cfg.within_cluster_prob)) {
        item = home * cfg.items_per_cluster + rng.index(cfg.items_per_cluster);
      } else {
        item = rng.index(cfg.n_items());
      }
      rows.push_back({user, synth_item_id(item), static_cast<std::int64_t>(pos)});
    }
  }
  return rows;
}

inline InteractionLog synth_generate(const SynthConfig& cfg, Rng& rng) { return build_log(synth_events(cfg, rng)); }

}  // namespace mecos
