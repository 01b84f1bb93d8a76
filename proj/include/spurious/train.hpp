#pragma once

// Episodic meta-training with per-epoch spuriousness recomputation, the ERM
// baselines, SGD with momentum and weight decay, cosine annealing, and model
// selection.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spurious/episodes.hpp"
#include "spurious/groups.hpp"
#include "spurious/model.hpp"

namespace spurious {

enum class Method { kMetaAware, kMetaRandom, kErmLinear, kErmCosine };
enum class Selection { kPseudoUnbiased, kValidationAccuracy };

std::string method_name(Method method);
Method parse_method(std::string_view name);
std::string selection_name(Selection selection);
Selection parse_selection(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t tasks_per_epoch = 80;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double tau = 5.0;
  std::size_t n_support = 10;
  SpuriousnessMetric metric = SpuriousnessMetric::kTanhAbsLogRatio;
  Selection selection = Selection::kPseudoUnbiased;
  std::uint64_t seed = 0;

  Method method = Method::kMetaAware;
  // Hidden and output widths; the input width comes from the data.
  std::vector<std::size_t> layers = {32, 16};
  Activation activation = Activation::kRelu;
  std::size_t min_frequency = 10;
  std::size_t retry_budget = 20;
  std::size_t classes_per_task = 0;
  std::size_t recompute_interval = 1;
  std::size_t task_batch = 1;
  std::size_t erm_batch_size = 32;
};

// Throws ConfigError on a violated invariant. ERM allows zero epochs.
void validate(const TrainConfig& cfg);

// Flat key=value text; '#' starts a comment. These keys are required:
// epochs, tasks_per_epoch, lr, momentum, weight_decay, tau, n_support,
// metric, selection, seed. Missing or unknown keys raise ConfigError naming
// the key.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& cfg);

// 0.5 * lr0 * (1 + cos(pi * t / E))
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

struct OptimizerState {
  std::vector<DenseLayer> velocity;

  static OptimizerState zeros_like(const std::vector<DenseLayer>& params);
};

// g' = g + wd * p; v = m * v + g'; p -= lr * v. Throws DivergenceError if
// an updated parameter is not finite.
void sgd_step(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grads,
              OptimizerState& state, double lr, double momentum, double weight_decay);

// A split with its features and the groups derived from detected attributes.
struct AttributedSplit {
  FeatureStore store;
  GroupIndex groups;
};

struct PseudoUnbiased {
  double accuracy = 0.0;
  std::size_t nonempty_groups = 0;
};

// Mean accuracy over nonempty (class, attribute) validation groups, with
// predictions from the centroid classifier built on all of `train`.
PseudoUnbiased pseudo_unbiased_accuracy(const ExtractorParams& params, const GroupIndex& val_groups,
                                        const FeatureStore& val, const FeatureStore& train,
                                        double tau);

// Same, for arbitrary predictions over the split that `groups` indexes.
PseudoUnbiased pseudo_unbiased_accuracy(const GroupIndex& groups, const PredictionRecord& predictions);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double selection_metric = 0.0;
  double learning_rate = 0.0;
  int table_epoch = 0;  // epoch whose spuriousness table drove this epoch
  std::string checkpoint;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// CSV header epoch,mean_loss,selection_metric,lr; 17 significant digits.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);
TrainHistory read_history_csv(const std::filesystem::path& path);

std::string checkpoint_name(std::size_t epoch);

struct MetaTrainResult {
  TrainHistory history;
  ExtractorParams best_params;
  std::size_t best_epoch = 0;
  ExtractorParams final_params;
  SpuriousnessTable initial_table;
  // Recomputed with the final parameters after the last epoch.
  SpuriousnessTable final_table;
  std::size_t optimizer_steps = 0;
};

// Called after every epoch with the record and the parameters at its end.
using EpochObserver = std::function<void(const EpochRecord&, const ExtractorParams&)>;

ExtractorParams initial_extractor(const TrainConfig& cfg, std::size_t input_dim);

// cfg.method must be kMetaAware or kMetaRandom.
MetaTrainResult meta_train(const TrainConfig& cfg, const AttributedSplit& train,
                           const AttributedSplit& val, const EpochObserver& observer = {});
MetaTrainResult meta_train(const TrainConfig& cfg, ExtractorParams init,
                           const AttributedSplit& train, const AttributedSplit& val,
                           const EpochObserver& observer = {});

// Spuriousness table of the centroid classifier over the training split.
SpuriousnessTable current_spuriousness(const ExtractorParams& params, const AttributedSplit& train,
                                       double tau, SpuriousnessMetric metric, int epoch_tag);

struct ErmResult {
  TrainHistory history;
  ExtractorParams params;
  LinearHead head;
  HeadMode mode = HeadMode::kLinear;
  std::size_t best_epoch = 0;
};

using ErmObserver =
    std::function<void(const EpochRecord&, const ExtractorParams&, const LinearHead&)>;

// Minibatch SGD on softmax cross-entropy; selects the epoch with the best
// average validation accuracy. Zero epochs returns the initialization.
ErmResult erm_train(const TrainConfig& cfg, const FeatureStore& train, const FeatureStore& val,
                    HeadMode mode, const ErmObserver& observer = {});

std::vector<int> erm_predict(const ExtractorParams& params, const LinearHead& head, HeadMode mode,
                             double tau, const Matrix& inputs);

}  // namespace spurious
