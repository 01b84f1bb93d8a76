#include "spurious/train.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "spurious/errors.hpp"

namespace spurious {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value for '" + key + "': " + value);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::istringstream in(value);
  std::string piece;
  while (std::getline(in, piece, ',')) out.push_back(parse_value<std::size_t>(key, std::string(trim(piece))));
  if (out.empty()) throw ConfigError("'" + key + "' needs at least one value");
  return out;
}

constexpr std::array kRequiredKeys = {"epochs", "tasks_per_epoch", "lr",       "momentum",  "weight_decay",
                                      "tau",    "n_support",       "metric",   "selection", "seed"};

std::vector<std::size_t> layer_dims(const TrainConfig& cfg, std::size_t input_dim) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.layers.begin(), cfg.layers.end());
  return dims;
}

EpisodeConfig episode_config(const TrainConfig& cfg) {
  EpisodeConfig e;
  e.n_support = cfg.n_support;
  e.n_classes_per_task = cfg.classes_per_task;
  e.retry_budget = cfg.retry_budget;
  e.mode = cfg.method == Method::kMetaRandom ? EpisodeMode::kRandom : EpisodeMode::kSpuriousnessAware;
  return e;
}

PredictionRecord predict_split(const CentroidClassifier& classifier, const FeatureStore& split) {
  return {classifier.predict_batch(split.features), split.labels};
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::kMetaAware: return "meta-aware";
    case Method::kMetaRandom: return "meta-random";
    case Method::kErmLinear: return "erm";
    case Method::kErmCosine: return "erm-cosine";
  }
  return "meta-aware";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::kMetaAware, Method::kMetaRandom, Method::kErmLinear, Method::kErmCosine}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::string selection_name(Selection selection) {
  return selection == Selection::kPseudoUnbiased ? "pseudo-unbiased" : "validation-accuracy";
}

Selection parse_selection(std::string_view name) {
  if (name == "pseudo-unbiased") return Selection::kPseudoUnbiased;
  if (name == "validation-accuracy") return Selection::kValidationAccuracy;
  throw ConfigError("unknown selection '" + std::string(name) + "'");
}

void validate(const TrainConfig& cfg) {
  const bool erm = cfg.method == Method::kErmLinear || cfg.method == Method::kErmCosine;
  if (cfg.epochs < 1 && !erm) throw ConfigError("epochs must be at least 1");
  if (cfg.tasks_per_epoch < 1) throw ConfigError("tasks_per_epoch must be at least 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("lr must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(cfg.tau > 0.0)) throw ConfigError("tau must be positive");
  if (cfg.n_support < 1) throw ConfigError("n_support must be at least 1");
  if (cfg.layers.empty()) throw ConfigError("layers needs at least one width");
  for (auto w : cfg.layers) {
    if (w < 1) throw ConfigError("layer widths must be positive");
  }
  if (cfg.min_frequency < 1) throw ConfigError("min_frequency must be at least 1");
  if (cfg.retry_budget < 1) throw ConfigError("retry_budget must be at least 1");
  if (cfg.recompute_interval < 1) throw ConfigError("recompute_interval must be at least 1");
  if (cfg.task_batch < 1) throw ConfigError("task_batch must be at least 1");
  if (cfg.erm_batch_size < 1) throw ConfigError("erm_batch_size must be at least 1");
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (!seen.insert(key).second) throw ConfigError("key '" + key + "' given twice");
    if (key == "epochs") cfg.epochs = parse_value<std::size_t>(key, value);
    else if (key == "tasks_per_epoch") cfg.tasks_per_epoch = parse_value<std::size_t>(key, value);
    else if (key == "lr") cfg.learning_rate = parse_value<double>(key, value);
    else if (key == "momentum") cfg.momentum = parse_value<double>(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_value<double>(key, value);
    else if (key == "tau") cfg.tau = parse_value<double>(key, value);
    else if (key == "n_support") cfg.n_support = parse_value<std::size_t>(key, value);
    else if (key == "metric") cfg.metric = parse_metric(value);
    else if (key == "selection") cfg.selection = parse_selection(value);
    else if (key == "seed") cfg.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "method") cfg.method = parse_method(value);
    else if (key == "layers") cfg.layers = parse_sizes(key, value);
    else if (key == "activation") cfg.activation = parse_activation(value);
    else if (key == "min_frequency") cfg.min_frequency = parse_value<std::size_t>(key, value);
    else if (key == "retry_budget") cfg.retry_budget = parse_value<std::size_t>(key, value);
    else if (key == "classes_per_task") cfg.classes_per_task = parse_value<std::size_t>(key, value);
    else if (key == "recompute_interval") cfg.recompute_interval = parse_value<std::size_t>(key, value);
    else if (key == "task_batch") cfg.task_batch = parse_value<std::size_t>(key, value);
    else if (key == "erm_batch_size") cfg.erm_batch_size = parse_value<std::size_t>(key, value);
    else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  for (const char* key : kRequiredKeys) {
    if (seen.count(key) == 0) throw ConfigError("missing required config key '" + std::string(key) + "'");
  }
  validate(cfg);
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_train_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "method=" << method_name(cfg.method) << '\n'
      << "epochs=" << cfg.epochs << '\n'
      << "tasks_per_epoch=" << cfg.tasks_per_epoch << '\n'
      << "lr=" << cfg.learning_rate << '\n'
      << "momentum=" << cfg.momentum << '\n'
      << "weight_decay=" << cfg.weight_decay << '\n'
      << "tau=" << cfg.tau << '\n'
      << "n_support=" << cfg.n_support << '\n'
      << "metric=" << metric_name(cfg.metric) << '\n'
      << "selection=" << selection_name(cfg.selection) << '\n'
      << "seed=" << cfg.seed << '\n';
  out << "layers=";
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) out << (i ? "," : "") << cfg.layers[i];
  out << '\n'
      << "activation=" << activation_name(cfg.activation) << '\n'
      << "min_frequency=" << cfg.min_frequency << '\n'
      << "retry_budget=" << cfg.retry_budget << '\n'
      << "classes_per_task=" << cfg.classes_per_task << '\n'
      << "recompute_interval=" << cfg.recompute_interval << '\n'
      << "task_batch=" << cfg.task_batch << '\n'
      << "erm_batch_size=" << cfg.erm_batch_size << '\n';
  return out.str();
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
  if (total_epochs == 0) return lr0;
  const double t = static_cast<double>(std::min(epoch, total_epochs));
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_epochs)));
}

OptimizerState OptimizerState::zeros_like(const std::vector<DenseLayer>& params) {
  return {GradientSet::zeros_like(params).layers};
}

void sgd_step(std::vector<DenseLayer>& params, const std::vector<DenseLayer>& grads,
              OptimizerState& state, double lr, double momentum, double weight_decay) {
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw DataError("optimizer shapes are not congruent");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& v = state.velocity[i];
    const auto& g = grads[i];
    if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() ||
        g.bias.size() != p.bias.size() || v.weight.rows() != p.weight.rows() ||
        v.weight.cols() != p.weight.cols() || v.bias.size() != p.bias.size()) {
      throw DataError("optimizer shapes are not congruent");
    }
    v.weight = momentum * v.weight + (g.weight + weight_decay * p.weight);
    v.bias = momentum * v.bias + (g.bias + weight_decay * p.bias);
    p.weight -= lr * v.weight;
    p.bias -= lr * v.bias;
    if (!p.weight.allFinite() || !p.bias.allFinite()) {
      throw DivergenceError("non-finite parameter after SGD step");
    }
  }
}

PseudoUnbiased pseudo_unbiased_accuracy(const GroupIndex& groups, const PredictionRecord& predictions) {
  PseudoUnbiased out;
  double total = 0.0;
  for (std::size_t k = 0; k < groups.num_classes(); ++k) {
    for (std::size_t a = 0; a < groups.num_attributes(); ++a) {
      const auto& members = groups.members(k, a);
      if (members.empty()) continue;
      total += group_accuracy(members, predictions);
      ++out.nonempty_groups;
    }
  }
  if (out.nonempty_groups == 0) throw DataError("every validation group is empty");
  out.accuracy = total / static_cast<double>(out.nonempty_groups);
  return out;
}

PseudoUnbiased pseudo_unbiased_accuracy(const ExtractorParams& params, const GroupIndex& val_groups,
                                        const FeatureStore& val, const FeatureStore& train,
                                        double tau) {
  const CentroidClassifier classifier(params, train, tau);
  return pseudo_unbiased_accuracy(val_groups, predict_split(classifier, val));
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw DataError("accuracy needs equally sized, nonempty prediction and label lists");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,mean_loss,selection_metric,lr\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << ',' << r.mean_loss << ',' << r.selection_metric << ',' << r.learning_rate << '\n';
  }
}

TrainHistory read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,mean_loss,selection_metric,lr") {
    throw DataError(path.string() + ": unexpected history header");
  }
  TrainHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    std::istringstream fields(line);
    std::string e, loss, metric, lr;
    if (!std::getline(fields, e, ',') || !std::getline(fields, loss, ',') ||
        !std::getline(fields, metric, ',') || !std::getline(fields, lr)) {
      throw DataError(path.string() + ": malformed history row");
    }
    r.epoch = std::stoul(e);
    r.mean_loss = std::stod(loss);
    r.selection_metric = std::stod(metric);
    r.learning_rate = std::stod(lr);
    r.checkpoint = checkpoint_name(r.epoch);
    h.epochs.push_back(r);
  }
  return h;
}

std::string checkpoint_name(std::size_t epoch) { return "ckpt_epoch_" + std::to_string(epoch); }

ExtractorParams initial_extractor(const TrainConfig& cfg, std::size_t input_dim) {
  Rng rng(derive_seed(cfg.seed, 0x1417));
  const auto dims = layer_dims(cfg, input_dim);
  return ExtractorParams::random(dims, cfg.activation, rng);
}

SpuriousnessTable current_spuriousness(const ExtractorParams& params, const AttributedSplit& train,
                                       double tau, SpuriousnessMetric metric, int epoch_tag) {
  const CentroidClassifier classifier(params, train.store, tau);
  return build_spuriousness_table(train.groups, predict_split(classifier, train.store), metric,
                                  epoch_tag);
}

MetaTrainResult meta_train(const TrainConfig& cfg, const AttributedSplit& train,
                           const AttributedSplit& val, const EpochObserver& observer) {
  return meta_train(cfg, initial_extractor(cfg, train.store.dim()), train, val, observer);
}

MetaTrainResult meta_train(const TrainConfig& cfg, ExtractorParams init,
                           const AttributedSplit& train, const AttributedSplit& val,
                           const EpochObserver& observer) {
  validate(cfg);
  if (cfg.method != Method::kMetaAware && cfg.method != Method::kMetaRandom) {
    throw ConfigError("meta_train needs method meta-aware or meta-random");
  }
  if (train.store.size() != train.groups.num_samples() || val.store.size() != val.groups.num_samples()) {
    throw DataError("feature store and group index sizes differ");
  }
  const EpisodeConfig ecfg = episode_config(cfg);
  MetaTrainResult result;
  ExtractorParams params = std::move(init);
  OptimizerState state = OptimizerState::zeros_like(params.layers());
  double best_metric = -INFINITY;
  SpuriousnessTable table;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if ((epoch - 1) % cfg.recompute_interval == 0) {
      table = current_spuriousness(params, train, cfg.tau, cfg.metric, static_cast<int>(epoch));
      if (epoch == 1) result.initial_table = table;
    }
    const double lr = cosine_lr(epoch - 1, cfg.epochs, cfg.learning_rate);
    double loss_sum = 0.0;
    std::size_t t = 0;
    while (t < cfg.tasks_per_epoch) {
      const std::size_t batch = std::min(cfg.task_batch, cfg.tasks_per_epoch - t);
      GradientSet grad = GradientSet::zeros_like(params.layers());
      for (std::size_t b = 0; b < batch; ++b, ++t) {
        const std::uint64_t seed = derive_seed(cfg.seed, (epoch - 1) * cfg.tasks_per_epoch + t + 1);
        Episode episode;
        try {
          episode = make_episode(train.groups, &table, ecfg, seed);
        } catch (const DataError& e) {
          throw DataError("epoch " + std::to_string(epoch) + ", task " + std::to_string(t + 1) +
                          ": " + e.what());
        }
        auto lg = episode_gradient(params, episode, train.store, cfg.tau);
        loss_sum += lg.loss;
        grad += lg.gradient;
      }
      grad *= 1.0 / static_cast<double>(batch);
      sgd_step(params.mutable_layers(), grad.layers, state, lr, cfg.momentum, cfg.weight_decay);
      ++result.optimizer_steps;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(cfg.tasks_per_epoch);
    record.learning_rate = lr;
    record.table_epoch = table.epoch_tag();
    record.checkpoint = checkpoint_name(epoch);
    if (cfg.selection == Selection::kPseudoUnbiased) {
      record.selection_metric =
          pseudo_unbiased_accuracy(params, val.groups, val.store, train.store, cfg.tau).accuracy;
    } else {
      const CentroidClassifier classifier(params, train.store, cfg.tau);
      record.selection_metric = accuracy(classifier.predict_batch(val.store.features), val.store.labels);
    }
    if (record.selection_metric > best_metric) {
      best_metric = record.selection_metric;
      result.best_params = params;
      result.best_epoch = epoch;
    }
    result.history.epochs.push_back(record);
    if (observer) observer(record, params);
  }
  result.final_table = current_spuriousness(params, train, cfg.tau, cfg.metric,
                                            static_cast<int>(cfg.epochs + 1));
  result.final_params = std::move(params);
  return result;
}

std::vector<int> erm_predict(const ExtractorParams& params, const LinearHead& head, HeadMode mode,
                             double tau, const Matrix& inputs) {
  const Matrix logits = head_logits(head, embed(params, inputs), mode, tau);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<int>(argmax_lowest(logits.row(i).transpose()));
  }
  return out;
}

ErmResult erm_train(const TrainConfig& cfg, const FeatureStore& train, const FeatureStore& val,
                    HeadMode mode, const ErmObserver& observer) {
  validate(cfg);
  if (train.size() == 0) throw DataError("empty training split");
  ErmResult result;
  result.mode = mode;
  result.params = initial_extractor(cfg, train.dim());
  Rng head_rng(derive_seed(cfg.seed, 0x4ead));
  result.head = make_linear_head(train.num_classes, result.params.output_dim(), head_rng);

  ExtractorParams params = result.params;
  LinearHead head = result.head;
  OptimizerState extractor_state = OptimizerState::zeros_like(params.layers());
  std::vector<DenseLayer> head_params{head};
  OptimizerState head_state = OptimizerState::zeros_like(head_params);
  Rng order_rng(derive_seed(cfg.seed, 0x0bd3));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_metric = -INFINITY;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch - 1, cfg.epochs, cfg.learning_rate);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.erm_batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.erm_batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      auto lg = erm_loss(params, head_params.front(), train, batch, mode, cfg.tau);
      loss_sum += lg.loss;
      ++batches;
      sgd_step(params.mutable_layers(), lg.extractor.layers, extractor_state, lr, cfg.momentum,
               cfg.weight_decay);
      std::vector<DenseLayer> head_grad{lg.head};
      sgd_step(head_params, head_grad, head_state, lr, cfg.momentum, cfg.weight_decay);
    }
    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(batches);
    record.learning_rate = lr;
    record.checkpoint = checkpoint_name(epoch);
    record.selection_metric =
        accuracy(erm_predict(params, head_params.front(), mode, cfg.tau, val.features), val.labels);
    if (record.selection_metric > best_metric) {
      best_metric = record.selection_metric;
      result.params = params;
      result.head = head_params.front();
      result.best_epoch = epoch;
    }
    result.history.epochs.push_back(record);
    if (observer) observer(record, params, head_params.front());
  }
  return result;
}

}  // namespace spurious
