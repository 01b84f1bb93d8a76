#pragma once

// Synthetic spurious-correlation benchmark. Each sample carries a core
// feature block determined by its class and a spurious block determined by
// a latent attribute; in the skewed splits most samples of class k carry
// attribute k. Template captions name the class and the attribute so the
// caption pipeline can recover the attribute groups.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spurious/corpus.hpp"
#include "spurious/model.hpp"
#include "spurious/random.hpp"

namespace spurious {

struct BenchSpec {
  std::size_t n_classes = 2;
  std::size_t core_dim = 5;
  std::size_t spurious_dim = 5;
  std::size_t train_per_class = 1000;
  std::size_t val_per_class = 1000;
  // The test split holds this many samples for every (class, attribute).
  std::size_t test_per_group = 2000;
  double majority_fraction = 0.95;
  double noise_std = 1.0;
  // Pairwise distances between class means (core block) and attribute
  // means (spurious block).
  double core_separation = 4.0;
  double spurious_separation = 8.0;
  std::vector<std::string> templates = {"a photo of a {class} on the {attr}",
                                        "a {class} standing near the {attr}",
                                        "a {class} in front of some {attr}"};
  // Missing class / attribute words are generated.
  std::vector<std::string> class_words = {"landbird", "waterbird"};
  std::vector<std::string> attribute_words = {"land", "water"};
  std::vector<std::string> distractor_nouns = {"tree", "sky", "rock", "branch", "cloud", "fence"};
  std::vector<std::string> distractor_adjectives = {"small", "bright", "dark", "blue", "large",
                                                    "sunny"};
  std::size_t max_distractors = 3;
  std::uint64_t seed = 0;

  std::size_t n_attributes() const { return n_classes; }
  std::size_t dim() const { return core_dim + spurious_dim; }
  std::string class_word(std::size_t k) const;
  std::string attribute_word(std::size_t a) const;
};

// Throws ConfigError on a violated spec invariant or infeasible group sizes.
void validate(const BenchSpec& spec);

// key=value lines; unknown keys are errors. List values are comma separated,
// templates are separated by '|'.
BenchSpec parse_bench_spec(std::string_view text);
BenchSpec load_bench_spec(const std::filesystem::path& path);
std::string format_bench_spec(const BenchSpec& spec);

struct SplitData {
  std::vector<std::string> ids;
  Matrix features;
  std::vector<int> labels;
  std::vector<int> attributes;  // latent spurious attribute per sample
  std::size_t num_classes = 0;
  std::size_t num_attributes = 0;

  std::size_t size() const { return labels.size(); }
  int group(std::size_t i) const {
    return labels[i] * static_cast<int>(num_attributes) + attributes[i];
  }
  FeatureStore store() const { return {features, labels, num_classes}; }
};

struct SyntheticDataset {
  SplitData train;
  SplitData val;
  SplitData test;
  Matrix core_means;      // K x core_dim
  Matrix spurious_means;  // K x spurious_dim
};

// Number of train-style samples of class k carrying attribute a.
std::size_t skewed_group_size(std::size_t per_class, double majority_fraction,
                              std::size_t n_attributes, std::size_t k, std::size_t a);

SyntheticDataset generate_dataset(const BenchSpec& spec, Rng& rng);

// Means with pairwise distance at least `separation`.
Matrix separated_means(std::size_t count, std::size_t dim, double separation, Rng& rng);

PosLexicon synthesize_lexicon(const BenchSpec& spec);
CaptionSet synthesize_captions(const SplitData& split, const BenchSpec& spec, Rng& rng);

// Header `dim=<d> classes=<K>`, then `id,class,group,feat_0,...` rows with
// group = class * K + attribute. Features use 17 significant digits.
void write_split_csv(const std::filesystem::path& path, const SplitData& split);
SplitData read_split_csv(const std::filesystem::path& path);

}  // namespace spurious
