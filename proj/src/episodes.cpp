#include "spurious/episodes.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "spurious/errors.hpp"

namespace spurious {

namespace {

std::vector<int> select_classes(const GroupIndex& index, const EpisodeConfig& cfg, Rng& rng) {
  std::vector<int> all(index.num_classes());
  std::iota(all.begin(), all.end(), 0);
  const std::size_t want = cfg.n_classes_per_task;
  if (want == 0 || want >= all.size()) return all;
  auto chosen = rng.sample_without_replacement(all, want);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

void validate(const EpisodeConfig& cfg) {
  if (cfg.n_support < 1) throw ConfigError("n_support must be at least 1");
  if (cfg.retry_budget < 1) throw ConfigError("retry_budget must be at least 1");
}

void append(std::vector<EpisodeItem>& out, const SampleList& samples, int label) {
  for (std::size_t s : samples) out.push_back({s, label});
}

}  // namespace

AttributePair sample_attribute_pair(std::size_t k, std::span<const double> dist,
                                    const GroupIndex& index, Rng& rng) {
  const std::size_t n = dist.size();
  if (n != index.num_attributes()) throw DataError("distribution size does not match attributes");
  std::size_t positive = 0;
  std::size_t realizable = 0;
  for (std::size_t a = 0; a < n; ++a) {
    positive += dist[a] > 0.0 ? 1 : 0;
    realizable += !index.members(k, a).empty() || dist[a] > 0.0 ? 1 : 0;
  }
  if (positive == 0 || realizable < 2) {
    throw DataError("class " + std::to_string(k) +
                    " has fewer than two attributes available for pair sampling");
  }
  const std::size_t first = rng.categorical(dist);

  std::vector<double> rest(dist.begin(), dist.end());
  rest[first] = 0.0;
  double remaining = 0.0;
  for (double p : rest) remaining += p;
  if (remaining <= 0.0) {
    for (std::size_t a = 0; a < n; ++a) {
      rest[a] = (a != first && !index.members(k, a).empty()) ? 1.0 : 0.0;
    }
  }
  return {first, rng.categorical(rest)};
}

SampleList exclusive_members(const GroupIndex& index, std::size_t k, std::size_t a,
                             std::size_t b) {
  const auto& in = index.members(k, a);
  const auto& out = index.members(k, b);
  SampleList diff;
  std::set_difference(in.begin(), in.end(), out.begin(), out.end(), std::back_inserter(diff));
  return diff;
}

Episode build_episode(const GroupIndex& index, const SpuriousnessTable& table,
                      const EpisodeConfig& cfg, Rng& rng) {
  validate(cfg);
  if (table.num_classes() != index.num_classes() ||
      table.num_attributes() != index.num_attributes()) {
    throw DataError("spuriousness table shape does not match the group index");
  }
  Episode episode;
  episode.classes = select_classes(index, cfg, rng);
  for (int y : episode.classes) {
    const auto k = static_cast<std::size_t>(y);
    const auto dist = sampling_distribution(table, k);
    bool built = false;
    AttributePair pair{0, 0};
    std::size_t support_pool = 0;
    std::size_t query_pool = 0;
    for (std::size_t attempt = 0; attempt < cfg.retry_budget && !built; ++attempt) {
      pair = sample_attribute_pair(k, dist, index, rng);
      auto support = exclusive_members(index, k, pair.first, pair.second);
      auto query = exclusive_members(index, k, pair.second, pair.first);
      support_pool = support.size();
      query_pool = query.size();
      if (support.size() < cfg.n_support || query.size() < cfg.n_support) continue;
      append(episode.support, rng.sample_without_replacement(std::move(support), cfg.n_support), y);
      append(episode.query, rng.sample_without_replacement(std::move(query), cfg.n_support), y);
      episode.chosen_pairs.push_back(pair);
      built = true;
    }
    if (!built) {
      throw DataError("episode construction failed for class " + std::to_string(k) + " after " +
                      std::to_string(cfg.retry_budget) + " attempts; last pair (" +
                      std::to_string(pair.first) + ", " + std::to_string(pair.second) +
                      ") had " + std::to_string(support_pool) + " and " +
                      std::to_string(query_pool) + " exclusive samples, need " +
                      std::to_string(cfg.n_support));
    }
  }
  return episode;
}

Episode build_random_episode(const GroupIndex& index, const EpisodeConfig& cfg, Rng& rng) {
  validate(cfg);
  Episode episode;
  episode.classes = select_classes(index, cfg, rng);
  for (int y : episode.classes) {
    const auto& all = index.class_samples(static_cast<std::size_t>(y));
    if (all.size() < 2 * cfg.n_support) {
      throw DataError("class " + std::to_string(y) + " has " + std::to_string(all.size()) +
                      " samples, need " + std::to_string(2 * cfg.n_support));
    }
    auto drawn = rng.sample_without_replacement(all, 2 * cfg.n_support);
    SampleList support(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(cfg.n_support));
    SampleList query(drawn.begin() + static_cast<std::ptrdiff_t>(cfg.n_support), drawn.end());
    append(episode.support, support, y);
    append(episode.query, query, y);
  }
  return episode;
}

Episode make_episode(const GroupIndex& index, const SpuriousnessTable* table,
                     const EpisodeConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Episode episode;
  if (cfg.mode == EpisodeMode::kRandom) {
    episode = build_random_episode(index, cfg, rng);
  } else {
    if (table == nullptr) throw DataError("spuriousness-aware episodes need a spuriousness table");
    episode = build_episode(index, *table, cfg, rng);
  }
  episode.seed = seed;
  return episode;
}

std::string episode_to_json(const Episode& episode, std::span<const std::string> sample_ids) {
  nlohmann::json j;
  j["classes"] = episode.classes;
  auto pairs = nlohmann::json::array();
  for (const auto& [a, b] : episode.chosen_pairs) pairs.push_back({a, b});
  j["pairs"] = pairs;
  auto ids = [&](const std::vector<EpisodeItem>& items) {
    auto arr = nlohmann::json::array();
    for (const auto& item : items) arr.push_back(sample_ids[item.sample]);
    return arr;
  };
  j["support_ids"] = ids(episode.support);
  j["query_ids"] = ids(episode.query);
  j["seed"] = episode.seed;
  return j.dump();
}

}  // namespace spurious
