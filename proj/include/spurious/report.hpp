#pragma once

// Group-robustness evaluation: average accuracy, worst-group accuracy and
// the gap between them, keyed by ground-truth groups.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "spurious/checkpoint.hpp"
#include "spurious/model.hpp"

namespace spurious {

struct GroupStat {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;

  friend bool operator==(const GroupStat&, const GroupStat&) = default;
};

struct MetricsReport {
  double average_accuracy = 0.0;
  double worst_group_accuracy = 0.0;
  double accuracy_gap = 0.0;
  std::map<int, GroupStat> groups;  // ground-truth group id -> stats
  // Declared groups with no test samples; left out of the worst-group min.
  std::vector<int> omitted_groups;
  std::optional<double> pseudo_unbiased_accuracy;
  std::size_t pseudo_unbiased_groups = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Average accuracy is over samples. `num_groups` declares the group ids
// [0, num_groups) so that empty ones can be listed as omitted.
MetricsReport evaluate_predictions(std::span<const int> predicted, std::span<const int> truth,
                                   std::span<const int> groups, std::size_t num_groups);

// Predictions of a checkpoint: its head when present, otherwise the
// centroid classifier over all of `train`.
std::vector<int> predict_with_checkpoint(const Checkpoint& ckpt, const FeatureStore& train,
                                         const Matrix& inputs);

// JSON with every field of the report; doubles are stored exactly.
void write_report_json(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report_json(const std::filesystem::path& path);

// group,count,correct,accuracy
void write_group_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace spurious
