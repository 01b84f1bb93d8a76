#pragma once

// Multilayer feature extractor, centroid-based cosine classifier, the
// episodic task loss with its exact gradient, and the ERM heads.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spurious/episodes.hpp"
#include "spurious/random.hpp"

namespace spurious {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kTanh, kLinear };

std::string activation_name(Activation activation);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

// The activation is applied between layers, not after the last one.
class ExtractorParams {
 public:
  ExtractorParams() = default;
  // Throws DataError when the layer dimensions do not chain or an entry is
  // not finite.
  ExtractorParams(std::vector<DenseLayer> layers, Activation activation);

  // He-style Gaussian initialization; dims = {input, hidden..., output}.
  static ExtractorParams random(std::span<const std::size_t> dims, Activation activation, Rng& rng);

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  Activation activation() const { return activation_; }
  std::vector<std::size_t> dims() const;
  std::size_t num_parameters() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::kRelu;
};

// Same shape as the parameters it differentiates.
struct GradientSet {
  std::vector<DenseLayer> layers;

  static GradientSet zeros_like(const std::vector<DenseLayer>& shape);
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double scale);
  bool all_finite() const;
};

// Row i of `embeddings` is the output for row i of the input batch.
struct ForwardCache {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> preactivations;
  Matrix embeddings;
};

// Throws DataError on an input dimension mismatch, DivergenceError when the
// output is not finite.
ForwardCache forward(const ExtractorParams& params, const Matrix& inputs);
Matrix embed(const ExtractorParams& params, const Matrix& inputs);

// Accumulates the gradient given d loss / d embeddings.
GradientSet backward(const ExtractorParams& params, const ForwardCache& cache,
                     const Matrix& embedding_grad);

// Row-per-sample features with class labels in [0, num_classes).
struct FeatureStore {
  Matrix features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  Matrix rows(std::span<const std::size_t> indices) const;
};

struct CentroidSet {
  Matrix centroids;  // K x D
  double tau = 5.0;

  std::size_t num_classes() const { return static_cast<std::size_t>(centroids.rows()); }
};

// Mean embedding per class. Throws DataError for a class without embeddings.
Matrix class_centroids(const Matrix& embeddings, std::span<const int> labels,
                       std::size_t num_classes);

// Cosine similarity; 0 when either vector has zero norm.
double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

// softmax_k(tau * cos(w_k, embedding))
Vector predict_proba(const CentroidSet& centroids, const Eigen::Ref<const Vector>& embedding);

struct LossAndGradient {
  double loss = 0.0;
  GradientSet gradient;
};

// Mean over the query set of -log p(y | x, support centroids).
double episode_loss(const ExtractorParams& params, const Episode& episode,
                    const FeatureStore& data, double tau);

// Gradient flows through both the support embeddings (via the centroids)
// and the query embeddings. Throws DivergenceError on a non-finite result.
LossAndGradient episode_gradient(const ExtractorParams& params, const Episode& episode,
                                 const FeatureStore& data, double tau);

// Final classification layer for ERM baselines: weight K x D, bias K.
using LinearHead = DenseLayer;

LinearHead make_linear_head(std::size_t num_classes, std::size_t dim, Rng& rng);

enum class HeadMode { kLinear, kCosine };

std::string head_mode_name(HeadMode mode);
HeadMode parse_head_mode(std::string_view name);

struct ErmLossAndGradient {
  double loss = 0.0;
  GradientSet extractor;
  DenseLayer head;
};

// Mean softmax cross-entropy over `batch`. Linear: logits W z + b. Cosine:
// logits tau * cos(W_k, z), bias unused (its gradient is zero).
ErmLossAndGradient erm_loss(const ExtractorParams& params, const LinearHead& head,
                            const FeatureStore& data, std::span<const std::size_t> batch,
                            HeadMode mode, double tau);

// Logits of the ERM head for a batch of embeddings (rows).
Matrix head_logits(const LinearHead& head, const Matrix& embeddings, HeadMode mode, double tau);

// Centroids from every training sample per class. Predictions take the
// argmax of predict_proba; ties go to the lowest class index.
class CentroidClassifier {
 public:
  CentroidClassifier(const ExtractorParams& params, const FeatureStore& train, double tau);

  const CentroidSet& centroids() const { return centroids_; }
  int predict(const Eigen::Ref<const Vector>& input) const;
  std::vector<int> predict_batch(const Matrix& inputs) const;

 private:
  ExtractorParams params_;
  CentroidSet centroids_;
};

int infer(const ExtractorParams& params, const FeatureStore& train,
          const Eigen::Ref<const Vector>& input, double tau);

std::size_t argmax_lowest(const Eigen::Ref<const Vector>& values);

}  // namespace spurious
