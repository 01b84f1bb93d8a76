#include "spurious/model.hpp"

#include <cmath>

#include "spurious/errors.hpp"

namespace spurious {

namespace {

Matrix apply_activation(const Matrix& x, Activation activation) {
  switch (activation) {
    case Activation::kRelu: return x.cwiseMax(0.0);
    case Activation::kTanh: return x.array().tanh().matrix();
    case Activation::kLinear: return x;
  }
  return x;
}

// d activation / d preactivation, elementwise.
Matrix activation_derivative(const Matrix& pre, Activation activation) {
  switch (activation) {
    case Activation::kRelu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh: return (1.0 - pre.array().tanh().square()).matrix();
    case Activation::kLinear: return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

void log_softmax_inplace(Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  logits.array() -= lse;
}

// Cosine similarities between every row of `queries` and every row of
// `centroids`, plus the norms used by the backward pass.
struct CosineTable {
  Matrix cos;  // n_query x K
  Vector query_norms;
  Vector centroid_norms;
};

CosineTable cosine_table(const Matrix& queries, const Matrix& centroids) {
  CosineTable t;
  t.query_norms = queries.rowwise().norm();
  t.centroid_norms = centroids.rowwise().norm();
  t.cos = queries * centroids.transpose();
  for (Eigen::Index n = 0; n < t.cos.rows(); ++n) {
    for (Eigen::Index k = 0; k < t.cos.cols(); ++k) {
      const double denom = t.query_norms(n) * t.centroid_norms(k);
      t.cos(n, k) = denom > 0.0 ? t.cos(n, k) / denom : 0.0;
    }
  }
  return t;
}

// Given dL/dcos (n_query x K), the gradients with respect to the query rows
// and the centroid rows.
void cosine_backward(const Matrix& queries, const Matrix& centroids, const CosineTable& t,
                     const Matrix& dcos, Matrix& dqueries, Matrix& dcentroids) {
  dqueries = Matrix::Zero(queries.rows(), queries.cols());
  dcentroids = Matrix::Zero(centroids.rows(), centroids.cols());
  for (Eigen::Index n = 0; n < queries.rows(); ++n) {
    const double zn = t.query_norms(n);
    if (zn <= 0.0) continue;
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
      const double wn = t.centroid_norms(k);
      if (wn <= 0.0) continue;
      const double g = dcos(n, k);
      if (g == 0.0) continue;
      const double c = t.cos(n, k);
      dqueries.row(n) += g * (centroids.row(k) / (wn * zn) - c * queries.row(n) / (zn * zn));
      dcentroids.row(k) += g * (queries.row(n) / (wn * zn) - c * centroids.row(k) / (wn * wn));
    }
  }
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DivergenceError(std::string("non-finite ") + what);
}

}  // namespace

std::string activation_name(Activation activation) {
  switch (activation) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kLinear: return "linear";
  }
  return "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "linear") return Activation::kLinear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

ExtractorParams::ExtractorParams(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw DataError("extractor needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weight.rows()) {
      throw DataError("layer " + std::to_string(i) + ": bias size does not match weight rows");
    }
    if (i > 0 && l.in_dim() != layers_[i - 1].out_dim()) {
      throw DataError("layer " + std::to_string(i) + ": input dimension does not chain");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw DataError("layer " + std::to_string(i) + ": non-finite parameter");
    }
  }
}

ExtractorParams ExtractorParams::random(std::span<const std::size_t> dims, Activation activation,
                                        Rng& rng) {
  if (dims.size() < 2) throw ConfigError("extractor needs input and output dimensions");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(dims[i]);
    const auto out = static_cast<Eigen::Index>(dims[i + 1]);
    if (in < 1 || out < 1) throw ConfigError("layer dimensions must be positive");
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    DenseLayer l{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = scale * rng.normal();
    }
    layers.push_back(std::move(l));
  }
  return ExtractorParams(std::move(layers), activation);
}

std::vector<std::size_t> ExtractorParams::dims() const {
  std::vector<std::size_t> d{input_dim()};
  for (const auto& l : layers_) d.push_back(l.out_dim());
  return d;
}

std::size_t ExtractorParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

GradientSet GradientSet::zeros_like(const std::vector<DenseLayer>& shape) {
  GradientSet g;
  for (const auto& l : shape) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  if (other.layers.size() != layers.size()) throw DataError("gradient shapes differ");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

GradientSet& GradientSet::operator*=(double scale) {
  for (auto& l : layers) {
    l.weight *= scale;
    l.bias *= scale;
  }
  return *this;
}

bool GradientSet::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

ForwardCache forward(const ExtractorParams& params, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != params.input_dim()) {
    throw DataError("input dimension " + std::to_string(inputs.cols()) +
                    " does not match extractor input " + std::to_string(params.input_dim()));
  }
  ForwardCache cache;
  Matrix x = inputs;
  const auto& layers = params.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cache.inputs.push_back(x);
    Matrix pre = x * layers[i].weight.transpose();
    pre.rowwise() += layers[i].bias.transpose();
    const bool last = i + 1 == layers.size();
    x = last ? pre : apply_activation(pre, params.activation());
    cache.preactivations.push_back(std::move(pre));
  }
  check_finite(x, "embeddings");
  cache.embeddings = std::move(x);
  return cache;
}

Matrix embed(const ExtractorParams& params, const Matrix& inputs) {
  return forward(params, inputs).embeddings;
}

GradientSet backward(const ExtractorParams& params, const ForwardCache& cache,
                     const Matrix& embedding_grad) {
  const auto& layers = params.layers();
  GradientSet grads = GradientSet::zeros_like(layers);
  Matrix delta = embedding_grad;  // d loss / d output of layer i
  for (std::size_t j = layers.size(); j-- > 0;) {
    if (j + 1 != layers.size()) {
      delta = delta.cwiseProduct(activation_derivative(cache.preactivations[j], params.activation()));
    }
    grads.layers[j].weight = delta.transpose() * cache.inputs[j];
    grads.layers[j].bias = delta.colwise().sum().transpose();
    if (j > 0) delta = delta * layers[j].weight;
  }
  return grads;
}

Matrix FeatureStore::rows(std::span<const std::size_t> indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), features.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

Matrix class_centroids(const Matrix& embeddings, std::span<const int> labels,
                       std::size_t num_classes) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw DataError("embedding and label counts differ");
  }
  Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(num_classes), embeddings.cols());
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw DataError("label out of range");
    sums.row(y) += embeddings.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) throw DataError("class " + std::to_string(k) + " has no embeddings");
    sums.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(counts[k]);
  }
  return sums;
}

double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

Vector predict_proba(const CentroidSet& centroids, const Eigen::Ref<const Vector>& embedding) {
  const auto k = centroids.centroids.rows();
  Vector logits(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    logits(i) = centroids.tau * cosine(centroids.centroids.row(i).transpose(), embedding);
  }
  log_softmax_inplace(logits);
  return logits.array().exp().matrix();
}

namespace {

struct EpisodeBatch {
  Matrix support_inputs;
  Matrix query_inputs;
  std::vector<int> support_local;  // index into episode.classes
  std::vector<int> query_local;
};

EpisodeBatch gather_episode(const Episode& episode, const FeatureStore& data) {
  std::vector<int> local(data.num_classes, -1);
  for (std::size_t i = 0; i < episode.classes.size(); ++i) {
    local.at(static_cast<std::size_t>(episode.classes[i])) = static_cast<int>(i);
  }
  EpisodeBatch b;
  std::vector<std::size_t> s_idx, q_idx;
  for (const auto& item : episode.support) {
    s_idx.push_back(item.sample);
    b.support_local.push_back(local.at(static_cast<std::size_t>(item.label)));
  }
  for (const auto& item : episode.query) {
    q_idx.push_back(item.sample);
    b.query_local.push_back(local.at(static_cast<std::size_t>(item.label)));
  }
  for (int l : b.support_local) {
    if (l < 0) throw DataError("support item with a class outside the episode");
  }
  for (int l : b.query_local) {
    if (l < 0) throw DataError("query item with a class outside the episode");
  }
  if (b.query_local.empty()) throw DataError("episode has an empty query set");
  b.support_inputs = data.rows(s_idx);
  b.query_inputs = data.rows(q_idx);
  return b;
}

// Shared body of episode_loss / episode_gradient.
LossAndGradient episode_objective(const ExtractorParams& params, const Episode& episode,
                                  const FeatureStore& data, double tau, bool with_gradient) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  const EpisodeBatch b = gather_episode(episode, data);
  const std::size_t n_classes = episode.classes.size();
  const ForwardCache support = forward(params, b.support_inputs);
  const ForwardCache query = forward(params, b.query_inputs);
  const Matrix centroids = class_centroids(support.embeddings, b.support_local, n_classes);
  const CosineTable t = cosine_table(query.embeddings, centroids);

  const auto n_query = static_cast<double>(b.query_local.size());
  LossAndGradient out;
  Matrix dcos(t.cos.rows(), t.cos.cols());
  for (Eigen::Index n = 0; n < t.cos.rows(); ++n) {
    Vector logp = tau * t.cos.row(n).transpose();
    log_softmax_inplace(logp);
    const int y = b.query_local[static_cast<std::size_t>(n)];
    out.loss -= logp(y);
    Vector p = logp.array().exp().matrix();
    p(y) -= 1.0;
    dcos.row(n) = (tau / n_query) * p.transpose();
  }
  out.loss /= n_query;
  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite episode loss");
  if (!with_gradient) return out;

  Matrix dquery, dcentroids;
  cosine_backward(query.embeddings, centroids, t, dcos, dquery, dcentroids);
  std::vector<double> counts(n_classes, 0.0);
  for (int l : b.support_local) counts[static_cast<std::size_t>(l)] += 1.0;
  Matrix dsupport(support.embeddings.rows(), support.embeddings.cols());
  for (std::size_t i = 0; i < b.support_local.size(); ++i) {
    const auto l = static_cast<std::size_t>(b.support_local[i]);
    dsupport.row(static_cast<Eigen::Index>(i)) = dcentroids.row(static_cast<Eigen::Index>(l)) / counts[l];
  }
  out.gradient = backward(params, query, dquery);
  out.gradient += backward(params, support, dsupport);
  if (!out.gradient.all_finite()) throw DivergenceError("non-finite episode gradient");
  return out;
}

}  // namespace

double episode_loss(const ExtractorParams& params, const Episode& episode,
                    const FeatureStore& data, double tau) {
  return episode_objective(params, episode, data, tau, false).loss;
}

LossAndGradient episode_gradient(const ExtractorParams& params, const Episode& episode,
                                 const FeatureStore& data, double tau) {
  return episode_objective(params, episode, data, tau, true);
}

LinearHead make_linear_head(std::size_t num_classes, std::size_t dim, Rng& rng) {
  const auto k = static_cast<Eigen::Index>(num_classes);
  const auto d = static_cast<Eigen::Index>(dim);
  LinearHead head{Matrix(k, d), Vector::Zero(k)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) head.weight(r, c) = scale * rng.normal();
  }
  return head;
}

std::string head_mode_name(HeadMode mode) {
  return mode == HeadMode::kLinear ? "linear" : "cosine";
}

HeadMode parse_head_mode(std::string_view name) {
  if (name == "linear") return HeadMode::kLinear;
  if (name == "cosine") return HeadMode::kCosine;
  throw ConfigError("unknown head mode '" + std::string(name) + "'");
}

Matrix head_logits(const LinearHead& head, const Matrix& embeddings, HeadMode mode, double tau) {
  if (mode == HeadMode::kLinear) {
    Matrix logits = embeddings * head.weight.transpose();
    logits.rowwise() += head.bias.transpose();
    return logits;
  }
  return tau * cosine_table(embeddings, head.weight).cos;
}

ErmLossAndGradient erm_loss(const ExtractorParams& params, const LinearHead& head,
                            const FeatureStore& data, std::span<const std::size_t> batch,
                            HeadMode mode, double tau) {
  if (batch.empty()) throw DataError("empty ERM batch");
  if (mode == HeadMode::kCosine && !(tau > 0.0)) throw ConfigError("tau must be positive");
  const ForwardCache cache = forward(params, data.rows(batch));
  const Matrix& z = cache.embeddings;
  const auto n = static_cast<double>(batch.size());

  CosineTable t;
  Matrix logits;
  if (mode == HeadMode::kLinear) {
    logits = head_logits(head, z, mode, tau);
  } else {
    t = cosine_table(z, head.weight);
    logits = tau * t.cos;
  }
  ErmLossAndGradient out;
  Matrix dlogits(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Vector logp = logits.row(i).transpose();
    log_softmax_inplace(logp);
    const int y = data.labels.at(batch[static_cast<std::size_t>(i)]);
    out.loss -= logp(y);
    Vector p = logp.array().exp().matrix();
    p(y) -= 1.0;
    dlogits.row(i) = p.transpose() / n;
  }
  out.loss /= n;
  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite ERM loss");

  Matrix dz;
  out.head.bias = Vector::Zero(head.bias.size());
  if (mode == HeadMode::kLinear) {
    out.head.weight = dlogits.transpose() * z;
    out.head.bias = dlogits.colwise().sum().transpose();
    dz = dlogits * head.weight;
  } else {
    Matrix dw;
    cosine_backward(z, head.weight, t, tau * dlogits, dz, dw);
    out.head.weight = std::move(dw);
  }
  out.extractor = backward(params, cache, dz);
  if (!out.extractor.all_finite() || !out.head.weight.allFinite()) {
    throw DivergenceError("non-finite ERM gradient");
  }
  return out;
}

std::size_t argmax_lowest(const Eigen::Ref<const Vector>& values) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

CentroidClassifier::CentroidClassifier(const ExtractorParams& params, const FeatureStore& train,
                                       double tau)
    : params_(params) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (train.size() == 0) throw DataError("empty training store");
  centroids_.centroids = class_centroids(embed(params, train.features), train.labels, train.num_classes);
  centroids_.tau = tau;
}

int CentroidClassifier::predict(const Eigen::Ref<const Vector>& input) const {
  Matrix row = input.transpose();
  return predict_batch(row).front();
}

std::vector<int> CentroidClassifier::predict_batch(const Matrix& inputs) const {
  const Matrix z = embed(params_, inputs);
  const CosineTable t = cosine_table(z, centroids_.centroids);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  // Softmax is monotone, so the argmax over cosines is the argmax over p.
  for (Eigen::Index n = 0; n < z.rows(); ++n) {
    out[static_cast<std::size_t>(n)] = static_cast<int>(argmax_lowest(t.cos.row(n).transpose()));
  }
  return out;
}

int infer(const ExtractorParams& params, const FeatureStore& train,
          const Eigen::Ref<const Vector>& input, double tau) {
  return CentroidClassifier(params, train, tau).predict(input);
}

}  // namespace spurious
