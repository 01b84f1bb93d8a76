#include "spurious/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spurious/errors.hpp"
#include "spurious/train.hpp"

namespace spurious {

MetricsReport evaluate_predictions(std::span<const int> predicted, std::span<const int> truth,
                                   std::span<const int> groups, std::size_t num_groups) {
  if (predicted.size() != truth.size() || truth.size() != groups.size()) {
    throw DataError("prediction, label and group lists differ in length");
  }
  if (truth.empty()) throw DataError("cannot evaluate an empty split");
  MetricsReport report;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (groups[i] < 0 || static_cast<std::size_t>(groups[i]) >= num_groups) {
      throw DataError("group id " + std::to_string(groups[i]) + " outside the declared groups");
    }
    auto& g = report.groups[groups[i]];
    ++g.count;
    if (predicted[i] == truth[i]) {
      ++g.correct;
      ++correct;
    }
  }
  report.worst_group_accuracy = 1.0;
  for (auto& [id, g] : report.groups) {
    g.accuracy = static_cast<double>(g.correct) / static_cast<double>(g.count);
    report.worst_group_accuracy = std::min(report.worst_group_accuracy, g.accuracy);
  }
  for (std::size_t id = 0; id < num_groups; ++id) {
    if (report.groups.count(static_cast<int>(id)) == 0) report.omitted_groups.push_back(static_cast<int>(id));
  }
  report.average_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  report.accuracy_gap = report.average_accuracy - report.worst_group_accuracy;
  return report;
}

std::vector<int> predict_with_checkpoint(const Checkpoint& ckpt, const FeatureStore& train,
                                         const Matrix& inputs) {
  if (ckpt.head) return erm_predict(ckpt.params, *ckpt.head, ckpt.head_mode, ckpt.tau, inputs);
  return CentroidClassifier(ckpt.params, train, ckpt.tau).predict_batch(inputs);
}

void write_report_json(const std::filesystem::path& path, const MetricsReport& report) {
  nlohmann::json j;
  j["average_accuracy"] = report.average_accuracy;
  j["worst_group_accuracy"] = report.worst_group_accuracy;
  j["accuracy_gap"] = report.accuracy_gap;
  auto groups = nlohmann::json::array();
  for (const auto& [id, g] : report.groups) {
    groups.push_back({{"group", id}, {"count", g.count}, {"correct", g.correct}, {"accuracy", g.accuracy}});
  }
  j["groups"] = groups;
  j["omitted_groups"] = report.omitted_groups;
  if (report.pseudo_unbiased_accuracy) {
    j["pseudo_unbiased_accuracy"] = *report.pseudo_unbiased_accuracy;
    j["pseudo_unbiased_groups"] = report.pseudo_unbiased_groups;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

MetricsReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    MetricsReport r;
    r.average_accuracy = j.at("average_accuracy").get<double>();
    r.worst_group_accuracy = j.at("worst_group_accuracy").get<double>();
    r.accuracy_gap = j.at("accuracy_gap").get<double>();
    for (const auto& g : j.at("groups")) {
      r.groups[g.at("group").get<int>()] = {g.at("count").get<std::size_t>(),
                                            g.at("correct").get<std::size_t>(),
                                            g.at("accuracy").get<double>()};
    }
    r.omitted_groups = j.at("omitted_groups").get<std::vector<int>>();
    if (j.contains("pseudo_unbiased_accuracy")) {
      r.pseudo_unbiased_accuracy = j.at("pseudo_unbiased_accuracy").get<double>();
      r.pseudo_unbiased_groups = j.at("pseudo_unbiased_groups").get<std::size_t>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_group_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "group,count,correct,accuracy\n";
  for (const auto& [id, g] : report.groups) {
    out << id << ',' << g.count << ',' << g.correct << ',' << g.accuracy << '\n';
  }
}

}  // namespace spurious
