#pragma once

// Meta-learning task construction: support and query sets per class drawn
// from attribute groups with shifted class-attribute correlations, plus the
// uniformly random construction used as an ablation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spurious/groups.hpp"
#include "spurious/random.hpp"

namespace spurious {

enum class EpisodeMode { kSpuriousnessAware, kRandom };

struct EpisodeConfig {
  std::size_t n_support = 10;
  // 0 selects every class.
  std::size_t n_classes_per_task = 0;
  std::size_t retry_budget = 20;
  EpisodeMode mode = EpisodeMode::kSpuriousnessAware;
};

struct EpisodeItem {
  std::size_t sample = 0;
  int label = 0;

  friend bool operator==(const EpisodeItem&, const EpisodeItem&) = default;
};

using AttributePair = std::pair<std::size_t, std::size_t>;

struct Episode {
  std::vector<int> classes;  // ascending
  std::vector<EpisodeItem> support;
  std::vector<EpisodeItem> query;
  // One pair per entry of `classes`; empty for random episodes.
  std::vector<AttributePair> chosen_pairs;
  std::uint64_t seed = 0;

  friend bool operator==(const Episode&, const Episode&) = default;
};

// a_k ~ dist; a_k' ~ dist with a_k removed and renormalized. When no
// probability mass remains, a_k' is uniform over the other attributes of
// class k with a nonempty member group. Throws DataError when fewer than two
// attributes are available.
AttributePair sample_attribute_pair(std::size_t k, std::span<const double> dist,
                                    const GroupIndex& index, Rng& rng);

// Set difference D(k, a) - D(k, b), ascending.
SampleList exclusive_members(const GroupIndex& index, std::size_t k, std::size_t a,
                             std::size_t b);

Episode build_episode(const GroupIndex& index, const SpuriousnessTable& table,
                      const EpisodeConfig& cfg, Rng& rng);

Episode build_random_episode(const GroupIndex& index, const EpisodeConfig& cfg, Rng& rng);

// Dispatches on cfg.mode. `seed` seeds a fresh generator and is recorded.
Episode make_episode(const GroupIndex& index, const SpuriousnessTable* table,
                     const EpisodeConfig& cfg, std::uint64_t seed);

// {classes, pairs, support_ids, query_ids, seed}
std::string episode_to_json(const Episode& episode, std::span<const std::string> sample_ids);

}  // namespace spurious
