#include "spurious/groups.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "spurious/errors.hpp"

namespace spurious {

const SampleList& GroupIndex::members(std::size_t k, std::size_t a) const {
  if (k >= num_classes_ || a >= num_attributes_) throw DataError("group index out of range");
  return members_[k * num_attributes_ + a];
}

SampleList GroupIndex::complement(std::size_t k, std::size_t a) const {
  const auto& all = class_samples(k);
  const auto& in = members(k, a);
  SampleList out;
  out.reserve(all.size() - in.size());
  std::set_difference(all.begin(), all.end(), in.begin(), in.end(), std::back_inserter(out));
  return out;
}

bool GroupIndex::has_attribute(std::size_t sample, std::size_t a) const {
  return incidence_.contains(sample, a);
}

GroupIndex build_group_index(std::span<const int> labels, std::size_t num_classes,
                             const AttributeIncidence& incidence) {
  if (labels.size() != incidence.num_samples()) {
    throw DataError("label count " + std::to_string(labels.size()) +
                    " does not match incidence rows " + std::to_string(incidence.num_samples()));
  }
  GroupIndex index;
  index.num_classes_ = num_classes;
  index.num_attributes_ = incidence.num_attributes();
  index.labels_.assign(labels.begin(), labels.end());
  index.class_samples_.resize(num_classes);
  index.members_.resize(num_classes * index.num_attributes_);
  index.incidence_ = incidence;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DataError("sample " + std::to_string(i) + " has label " + std::to_string(y) +
                      " outside the " + std::to_string(num_classes) + " declared classes");
    }
    index.class_samples_[y].push_back(i);
    for (std::size_t a : incidence.row(i)) {
      index.members_[static_cast<std::size_t>(y) * index.num_attributes_ + a].push_back(i);
    }
  }
  return index;
}

double group_accuracy(std::span<const std::size_t> group, const PredictionRecord& predictions) {
  if (group.empty()) throw DataError("accuracy of an empty group is undefined");
  std::size_t correct = 0;
  for (std::size_t s : group) {
    if (s >= predictions.size()) {
      throw DataError("no prediction for sample " + std::to_string(s));
    }
    if (predictions.correct(s)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(group.size());
}

std::string metric_name(SpuriousnessMetric metric) {
  switch (metric) {
    case SpuriousnessMetric::kTanhAbsLogRatio: return "tanh_abs_log_ratio";
    case SpuriousnessMetric::kAbsDelta: return "abs_delta";
    case SpuriousnessMetric::kDelta: return "delta";
    case SpuriousnessMetric::kTanhLogRatio: return "tanh_log_ratio";
    case SpuriousnessMetric::kConstant: return "constant";
  }
  return "unknown";
}

SpuriousnessMetric parse_metric(std::string_view name) {
  for (auto m : {SpuriousnessMetric::kTanhAbsLogRatio, SpuriousnessMetric::kAbsDelta,
                 SpuriousnessMetric::kDelta, SpuriousnessMetric::kTanhLogRatio,
                 SpuriousnessMetric::kConstant}) {
    if (metric_name(m) == name) return m;
  }
  throw ConfigError("unknown spuriousness metric '" + std::string(name) + "'");
}

double score_from_accuracies(double member_accuracy, double complement_accuracy,
                             std::size_t member_size, std::size_t complement_size,
                             SpuriousnessMetric metric) {
  if (member_size == 0 || complement_size == 0) return kEmptyGroupScore;
  const auto floored_ratio = [&] {
    const double p = std::max(member_accuracy, 0.5 / static_cast<double>(member_size));
    const double q = std::max(complement_accuracy, 0.5 / static_cast<double>(complement_size));
    return std::log(p / q);
  };
  switch (metric) {
    case SpuriousnessMetric::kTanhAbsLogRatio: return std::tanh(std::abs(floored_ratio()));
    case SpuriousnessMetric::kAbsDelta: return std::abs(member_accuracy - complement_accuracy);
    case SpuriousnessMetric::kDelta: return member_accuracy - complement_accuracy;
    case SpuriousnessMetric::kTanhLogRatio: return std::tanh(floored_ratio());
    case SpuriousnessMetric::kConstant: return 1.0;
  }
  return kEmptyGroupScore;
}

double spuriousness_score(std::size_t k, std::size_t a, const GroupIndex& index,
                          const PredictionRecord& predictions, SpuriousnessMetric metric) {
  const auto& member = index.members(k, a);
  const auto complement = index.complement(k, a);
  if (member.empty() || complement.empty()) return kEmptyGroupScore;
  return score_from_accuracies(group_accuracy(member, predictions),
                               group_accuracy(complement, predictions), member.size(),
                               complement.size(), metric);
}

SpuriousnessTable::SpuriousnessTable(std::size_t num_classes, std::size_t num_attributes,
                                     SpuriousnessMetric metric, int epoch_tag)
    : num_classes_(num_classes),
      num_attributes_(num_attributes),
      metric_(metric),
      epoch_tag_(epoch_tag),
      scores_(num_classes * num_attributes, kEmptyGroupScore),
      member_sizes_(num_classes * num_attributes, 0),
      complement_sizes_(num_classes * num_attributes, 0) {}

void SpuriousnessTable::set_sizes(std::size_t k, std::size_t a, std::size_t member,
                                  std::size_t complement) {
  member_sizes_.at(k * num_attributes_ + a) = member;
  complement_sizes_.at(k * num_attributes_ + a) = complement;
}

SpuriousnessTable build_spuriousness_table(const GroupIndex& index,
                                           const PredictionRecord& predictions,
                                           SpuriousnessMetric metric, int epoch_tag) {
  SpuriousnessTable table(index.num_classes(), index.num_attributes(), metric, epoch_tag);
  for (std::size_t k = 0; k < index.num_classes(); ++k) {
    const auto& all = index.class_samples(k);
    if (all.empty()) continue;
    std::size_t class_correct = 0;
    for (std::size_t s : all) {
      if (s >= predictions.size()) throw DataError("no prediction for sample " + std::to_string(s));
      if (predictions.correct(s)) ++class_correct;
    }
    for (std::size_t a = 0; a < index.num_attributes(); ++a) {
      const auto& member = index.members(k, a);
      const std::size_t n_in = member.size();
      const std::size_t n_out = all.size() - n_in;
      table.set_sizes(k, a, n_in, n_out);
      if (n_in == 0 || n_out == 0) continue;
      std::size_t in_correct = 0;
      for (std::size_t s : member) {
        if (predictions.correct(s)) ++in_correct;
      }
      const double p = static_cast<double>(in_correct) / static_cast<double>(n_in);
      const double q = static_cast<double>(class_correct - in_correct) / static_cast<double>(n_out);
      table.set_score(k, a, score_from_accuracies(p, q, n_in, n_out, metric));
    }
  }
  return table;
}

std::vector<double> sampling_distribution(const SpuriousnessTable& table, std::size_t k) {
  if (k >= table.num_classes()) throw DataError("class " + std::to_string(k) + " not in table");
  const std::size_t n = table.num_attributes();
  std::vector<double> probs(n, 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    probs[a] = std::max(table.score(k, a), 0.0);
    total += probs[a];
  }
  if (total > 0.0) {
    for (double& p : probs) p /= total;
    return probs;
  }
  std::size_t realizable = 0;
  for (std::size_t a = 0; a < n; ++a) {
    probs[a] = table.member_size(k, a) > 0 ? 1.0 : 0.0;
    realizable += table.member_size(k, a) > 0 ? 1 : 0;
  }
  if (realizable == 0) {
    throw DataError("class " + std::to_string(k) + " has no attribute with a nonempty group");
  }
  for (double& p : probs) p /= static_cast<double>(realizable);
  return probs;
}

std::vector<SpuriousnessRow> table_rows(const SpuriousnessTable& table,
                                        std::span<const std::string> class_names,
                                        const AttributeVocabulary& vocab, bool sort_descending) {
  if (class_names.size() != table.num_classes() || vocab.size() != table.num_attributes()) {
    throw DataError("class names or vocabulary do not match the spuriousness table shape");
  }
  std::vector<SpuriousnessRow> rows;
  rows.reserve(table.num_classes() * table.num_attributes());
  for (std::size_t k = 0; k < table.num_classes(); ++k) {
    for (std::size_t a = 0; a < table.num_attributes(); ++a) {
      rows.push_back({class_names[k], vocab.name(a), table.score(k, a), table.member_size(k, a),
                      table.complement_size(k, a)});
    }
  }
  if (sort_descending) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& l, const auto& r) { return l.score > r.score; });
  }
  return rows;
}

void write_spuriousness_csv(const std::filesystem::path& path,
                            std::span<const SpuriousnessRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "class,attribute,score,member_size,complement_size\n";
  for (const auto& r : rows) {
    out << r.class_name << ',' << r.attribute << ',' << r.score << ',' << r.member_size << ','
        << r.complement_size << '\n';
  }
}

std::vector<SpuriousnessRow> read_spuriousness_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "class,attribute,score,member_size,complement_size") {
    throw DataError(path.string() + ": unexpected spuriousness CSV header");
  }
  std::vector<SpuriousnessRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    SpuriousnessRow row;
    std::string score, member, complement;
    if (!std::getline(fields, row.class_name, ',') || !std::getline(fields, row.attribute, ',') ||
        !std::getline(fields, score, ',') || !std::getline(fields, member, ',') ||
        !std::getline(fields, complement)) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": malformed row");
    }
    try {
      row.score = std::stod(score);
      row.member_size = std::stoul(member);
      row.complement_size = std::stoul(complement);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace spurious
