#pragma once

// Class x attribute groups and the spuriousness scores computed over them.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spurious/corpus.hpp"

namespace spurious {

// Samples are addressed by their position within a split.
using SampleList = std::vector<std::size_t>;

class GroupIndex {
 public:
  GroupIndex() = default;

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_attributes() const { return num_attributes_; }
  std::size_t num_samples() const { return labels_.size(); }
  int label(std::size_t sample) const { return labels_.at(sample); }
  std::span<const int> labels() const { return labels_; }

  const SampleList& class_samples(std::size_t k) const { return class_samples_.at(k); }
  // Samples of class k whose incidence row contains attribute a.
  const SampleList& members(std::size_t k, std::size_t a) const;
  // Samples of class k whose row lacks attribute a.
  SampleList complement(std::size_t k, std::size_t a) const;
  std::size_t complement_size(std::size_t k, std::size_t a) const {
    return class_samples(k).size() - members(k, a).size();
  }
  bool has_attribute(std::size_t sample, std::size_t a) const;

  friend GroupIndex build_group_index(std::span<const int> labels, std::size_t num_classes,
                                      const AttributeIncidence& incidence);

 private:
  std::size_t num_classes_ = 0;
  std::size_t num_attributes_ = 0;
  std::vector<int> labels_;
  std::vector<SampleList> class_samples_;
  std::vector<SampleList> members_;  // [k * num_attributes + a], ascending
  AttributeIncidence incidence_;
};

// Throws DataError when a label is outside [0, num_classes) or the label and
// incidence sizes disagree.
GroupIndex build_group_index(std::span<const int> labels, std::size_t num_classes,
                             const AttributeIncidence& incidence);

struct PredictionRecord {
  std::vector<int> predicted;
  std::vector<int> truth;

  std::size_t size() const { return predicted.size(); }
  bool correct(std::size_t sample) const { return predicted.at(sample) == truth.at(sample); }
};

// Fraction of `group` predicted correctly. Throws DataError on an empty group
// or a sample outside the record.
double group_accuracy(std::span<const std::size_t> group, const PredictionRecord& predictions);

enum class SpuriousnessMetric { kTanhAbsLogRatio, kAbsDelta, kDelta, kTanhLogRatio, kConstant };

std::string metric_name(SpuriousnessMetric metric);
SpuriousnessMetric parse_metric(std::string_view name);

// Score reported for pairs with an empty member or complement group.
constexpr double kEmptyGroupScore = 0.0;

// Score from the two accuracies. `member_size` and `complement_size` set the
// accuracy floor 1/(2n) used by the ratio metrics.
double score_from_accuracies(double member_accuracy, double complement_accuracy,
                             std::size_t member_size, std::size_t complement_size,
                             SpuriousnessMetric metric);

double spuriousness_score(std::size_t k, std::size_t a, const GroupIndex& index,
                          const PredictionRecord& predictions, SpuriousnessMetric metric);

class SpuriousnessTable {
 public:
  SpuriousnessTable() = default;
  SpuriousnessTable(std::size_t num_classes, std::size_t num_attributes,
                    SpuriousnessMetric metric, int epoch_tag);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_attributes() const { return num_attributes_; }
  SpuriousnessMetric metric() const { return metric_; }
  int epoch_tag() const { return epoch_tag_; }
  void set_epoch_tag(int tag) { epoch_tag_ = tag; }

  double score(std::size_t k, std::size_t a) const { return scores_.at(k * num_attributes_ + a); }
  void set_score(std::size_t k, std::size_t a, double v) { scores_.at(k * num_attributes_ + a) = v; }
  std::size_t member_size(std::size_t k, std::size_t a) const {
    return member_sizes_.at(k * num_attributes_ + a);
  }
  std::size_t complement_size(std::size_t k, std::size_t a) const {
    return complement_sizes_.at(k * num_attributes_ + a);
  }
  void set_sizes(std::size_t k, std::size_t a, std::size_t member, std::size_t complement);
  std::span<const double> scores() const { return scores_; }

 private:
  std::size_t num_classes_ = 0;
  std::size_t num_attributes_ = 0;
  SpuriousnessMetric metric_ = SpuriousnessMetric::kTanhAbsLogRatio;
  int epoch_tag_ = 0;
  std::vector<double> scores_;
  std::vector<std::size_t> member_sizes_;
  std::vector<std::size_t> complement_sizes_;
};

SpuriousnessTable build_spuriousness_table(const GroupIndex& index,
                                           const PredictionRecord& predictions,
                                           SpuriousnessMetric metric, int epoch_tag = 0);

// Probabilities over attributes for class k, proportional to max(score, 0).
// Falls back to uniform over attributes with nonempty member groups when no
// score is positive. Throws DataError if class k has no such attribute.
std::vector<double> sampling_distribution(const SpuriousnessTable& table, std::size_t k);

struct SpuriousnessRow {
  std::string class_name;
  std::string attribute;
  double score = 0.0;
  std::size_t member_size = 0;
  std::size_t complement_size = 0;
};

// Rows in (class, attribute) order, or descending by score (ties keep
// (class, attribute) order) when `sort_descending` is set.
std::vector<SpuriousnessRow> table_rows(const SpuriousnessTable& table,
                                        std::span<const std::string> class_names,
                                        const AttributeVocabulary& vocab, bool sort_descending);

// CSV with header class,attribute,score,member_size,complement_size. Scores
// are written with 17 significant digits.
void write_spuriousness_csv(const std::filesystem::path& path,
                            std::span<const SpuriousnessRow> rows);
std::vector<SpuriousnessRow> read_spuriousness_csv(const std::filesystem::path& path);

}  // namespace spurious
