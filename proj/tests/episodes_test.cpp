#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "spurious/episodes.hpp"
#include "spurious/errors.hpp"

namespace sp = spurious;

namespace {

// Single class; rows[i] lists the attributes of sample i.
sp::GroupIndex one_class(std::size_t num_attrs, std::vector<std::vector<std::size_t>> rows) {
  std::vector<int> labels(rows.size(), 0);
  return sp::build_group_index(labels, 1, sp::AttributeIncidence(num_attrs, std::move(rows)));
}

sp::SpuriousnessTable table_for(const sp::GroupIndex& idx, const std::vector<double>& scores) {
  sp::SpuriousnessTable t(idx.num_classes(), idx.num_attributes(),
                          sp::SpuriousnessMetric::kTanhAbsLogRatio, 0);
  for (std::size_t k = 0; k < idx.num_classes(); ++k) {
    for (std::size_t a = 0; a < idx.num_attributes(); ++a) {
      t.set_sizes(k, a, idx.members(k, a).size(), idx.complement_size(k, a));
      t.set_score(k, a, scores[k * idx.num_attributes() + a]);
    }
  }
  return t;
}

std::set<std::size_t> samples_of(const std::vector<sp::EpisodeItem>& items) {
  std::set<std::size_t> out;
  for (const auto& it : items) out.insert(it.sample);
  return out;
}

}  // namespace

TEST(AttributePair, ForcedFallbackOnEmptyRemainder) {
  // attribute 2 has no members
  auto idx = one_class(3, {{0}, {1}, {0, 1}});
  std::vector<double> dist = {1.0, 0.0, 0.0};
  sp::Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(sp::sample_attribute_pair(0, dist, idx, rng), (sp::AttributePair{0, 1}));
  }
}

TEST(AttributePair, ZeroScoreFirstAttributeNeverDrawn) {
  auto idx = one_class(3, {{0}, {1}, {2}});
  std::vector<double> dist = {0.0, 1.0, 0.0};
  sp::Rng rng(2);
  std::set<std::size_t> seconds;
  for (int i = 0; i < 200; ++i) {
    auto [a, b] = sp::sample_attribute_pair(0, dist, idx, rng);
    EXPECT_EQ(a, 1u);
    seconds.insert(b);
  }
  EXPECT_EQ(seconds, (std::set<std::size_t>{0, 2}));
}

TEST(AttributePair, BothOrdersEquallyLikely) {
  auto idx = one_class(2, {{0}, {1}});
  std::vector<double> dist = {0.5, 0.5};
  sp::Rng rng(3);
  const int n = 20000;
  int forward = 0;
  for (int i = 0; i < n; ++i) {
    auto [a, b] = sp::sample_attribute_pair(0, dist, idx, rng);
    ASSERT_NE(a, b);
    forward += a == 0 ? 1 : 0;
  }
  const double sigma = std::sqrt(0.25 / n);
  EXPECT_NEAR(static_cast<double>(forward) / n, 0.5, 3 * sigma);
}

TEST(AttributePair, NeedsTwoAttributes) {
  auto idx = one_class(2, {{0}, {0}});
  std::vector<double> dist = {1.0, 0.0};
  sp::Rng rng(4);
  EXPECT_THROW(sp::sample_attribute_pair(0, dist, idx, rng), sp::DataError);
}

TEST(ExclusiveMembers, SetDifference) {
  auto idx = one_class(2, {{}, {0}, {0}, {0, 1}, {1}, {1}});
  EXPECT_EQ(sp::exclusive_members(idx, 0, 0, 1), (sp::SampleList{1, 2}));
  EXPECT_EQ(sp::exclusive_members(idx, 0, 1, 0), (sp::SampleList{4, 5}));
}

TEST(BuildEpisode, SharedSampleNeverUsed) {
  // {1,2,3} carry a=0, {3,4,5} carry a'=1.
  auto idx = one_class(2, {{}, {0}, {0}, {0, 1}, {1}, {1}});
  auto table = table_for(idx, {1.0, 0.0});
  sp::EpisodeConfig cfg;
  cfg.n_support = 2;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto ep = sp::make_episode(idx, &table, cfg, seed);
    EXPECT_EQ(samples_of(ep.support), (std::set<std::size_t>{1, 2}));
    EXPECT_EQ(samples_of(ep.query), (std::set<std::size_t>{4, 5}));
    EXPECT_EQ(ep.chosen_pairs, (std::vector<sp::AttributePair>{{0, 1}}));
  }
}

TEST(BuildEpisode, SingletonDifferencesAreForced) {
  auto idx = one_class(2, {{0}, {1}, {0, 1}});
  auto table = table_for(idx, {1.0, 0.0});
  sp::EpisodeConfig cfg;
  cfg.n_support = 1;
  auto a = sp::make_episode(idx, &table, cfg, 5);
  auto b = sp::make_episode(idx, &table, cfg, 99);
  EXPECT_EQ(a.support, b.support);
  EXPECT_EQ(a.query, b.query);
  EXPECT_EQ(a.support, (std::vector<sp::EpisodeItem>{{0, 0}}));
  EXPECT_EQ(a.query, (std::vector<sp::EpisodeItem>{{1, 0}}));
}

TEST(BuildEpisode, FailsWhenNoPairIsLargeEnough) {
  auto idx = one_class(2, {{0}, {1}, {0, 1}});
  auto table = table_for(idx, {0.5, 0.5});
  sp::EpisodeConfig cfg;
  cfg.n_support = 2;
  cfg.retry_budget = 3;
  try {
    sp::make_episode(idx, &table, cfg, 0);
    FAIL() << "expected DataError";
  } catch (const sp::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class 0"), std::string::npos) << e.what();
  }
}

TEST(BuildEpisode, ExactlyTwiceSupportCoversClass) {
  auto idx = one_class(2, {{0}, {1}, {0}, {1}});
  auto table = table_for(idx, {0.5, 0.5});
  sp::EpisodeConfig cfg;
  cfg.n_support = 2;
  auto ep = sp::make_episode(idx, &table, cfg, 7);
  auto s = samples_of(ep.support);
  auto q = samples_of(ep.query);
  std::set<std::size_t> all(s);
  all.insert(q.begin(), q.end());
  EXPECT_EQ(all, (std::set<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(s.size() + q.size(), 4u);
}

TEST(BuildEpisode, SameSeedSameEpisode) {
  std::vector<std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < 60; ++i) rows.push_back({i % 3});
  auto idx = one_class(3, rows);
  auto table = table_for(idx, {0.2, 0.5, 0.3});
  sp::EpisodeConfig cfg;
  cfg.n_support = 5;
  EXPECT_EQ(sp::make_episode(idx, &table, cfg, 42), sp::make_episode(idx, &table, cfg, 42));
  cfg.mode = sp::EpisodeMode::kRandom;
  EXPECT_EQ(sp::make_episode(idx, nullptr, cfg, 42), sp::make_episode(idx, nullptr, cfg, 42));
}

TEST(BuildEpisode, SupportFrequencyIsUniform) {
  // 40 samples carry a=0 only, 40 carry a'=1 only.
  std::vector<std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < 80; ++i) rows.push_back({i < 40 ? 0u : 1u});
  auto idx = one_class(2, rows);
  auto table = table_for(idx, {1.0, 0.0});
  sp::EpisodeConfig cfg;
  cfg.n_support = 5;
  const int builds = 1000;
  std::vector<int> count(80, 0);
  for (int i = 0; i < builds; ++i) {
    for (const auto& it : sp::make_episode(idx, &table, cfg, 1000 + i).support) ++count[it.sample];
  }
  const double p = 5.0 / 40.0;
  const double sigma = std::sqrt(builds * p * (1 - p));
  for (std::size_t s = 0; s < 40; ++s) EXPECT_NEAR(count[s], builds * p, 4 * sigma) << s;
  for (std::size_t s = 40; s < 80; ++s) EXPECT_EQ(count[s], 0) << s;
}

TEST(RandomEpisode, SupportFrequencyIsUniform) {
  std::vector<std::vector<std::size_t>> rows(40);
  auto idx = one_class(1, rows);
  sp::EpisodeConfig cfg;
  cfg.n_support = 5;
  cfg.mode = sp::EpisodeMode::kRandom;
  const int builds = 1000;
  std::vector<int> count(40, 0);
  for (int i = 0; i < builds; ++i) {
    auto ep = sp::make_episode(idx, nullptr, cfg, i);
    EXPECT_TRUE(ep.chosen_pairs.empty());
    for (const auto& it : ep.support) ++count[it.sample];
  }
  const double p = 5.0 / 40.0;
  const double sigma = std::sqrt(builds * p * (1 - p));
  for (int c : count) EXPECT_NEAR(c, builds * p, 4 * sigma);
}

TEST(BuildEpisode, FirstAttributeFollowsDistribution) {
  // Two classes, four attributes, every ordered pair feasible.
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> rows;
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 80; ++i) {
      labels.push_back(k);
      rows.push_back({i % 4});
    }
  }
  auto idx = sp::build_group_index(labels, 2, sp::AttributeIncidence(4, rows));
  auto table = table_for(idx, {0.1, 0.2, 0.3, 0.4, 0.7, 0.1, 0.1, 0.1});
  sp::EpisodeConfig cfg;
  cfg.n_support = 5;
  const int builds = 1000;
  std::vector<std::vector<int>> first(2, std::vector<int>(4, 0));
  for (int i = 0; i < builds; ++i) {
    auto ep = sp::make_episode(idx, &table, cfg, 7000 + i);
    ASSERT_EQ(ep.chosen_pairs.size(), 2u);
    for (std::size_t c = 0; c < 2; ++c) ++first[c][ep.chosen_pairs[c].first];
  }
  const double critical = boost::math::quantile(boost::math::chi_squared(3.0), 0.99);
  for (std::size_t k = 0; k < 2; ++k) {
    auto dist = sp::sampling_distribution(table, k);
    double stat = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
      const double expected = builds * dist[a];
      stat += (first[k][a] - expected) * (first[k][a] - expected) / expected;
    }
    EXPECT_LT(stat, critical) << "class " << k;
  }
}

TEST(EpisodeJson, Fields) {
  auto idx = one_class(2, {{0}, {1}});
  auto table = table_for(idx, {1.0, 0.0});
  sp::EpisodeConfig cfg;
  cfg.n_support = 1;
  auto ep = sp::make_episode(idx, &table, cfg, 9);
  std::vector<std::string> ids = {"x0", "x1"};
  EXPECT_EQ(sp::episode_to_json(ep, ids),
            R"({"classes":[0],"pairs":[[0,1]],"query_ids":["x1"],"seed":9,"support_ids":["x0"]})");
}
