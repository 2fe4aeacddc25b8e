#ifndef UAPR_MODEL_HPP_
#define UAPR_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uapr/autodiff.hpp"
#include "uapr/dataset.hpp"
#include "uapr/resizing.hpp"

namespace uapr {

enum class Pooling { kMac, kGem };

const char* pooling_name(Pooling p);
Pooling parse_pooling(const std::string& name);

struct ConvLayerSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 2;
  int padding = 1;
};

// Fully convolutional backbone (conv + bias + relu per layer) followed by a
// global pooling head and L2 normalization.
struct ModelSpec {
  int in_channels = 3;
  std::vector<ConvLayerSpec> layers = {{8}, {16}, {32}};
  Pooling pooling = Pooling::kMac;
  double gem_p = 3.0;
  int min_input_side = 16;

  int descriptor_dim() const { return layers.back().out_channels; }
  void validate() const;
};

// Linear layer over descriptors predicting pseudo-labels.
struct ClassifierHead {
  Tensor weight;  // [classes, D]
  Tensor bias;    // [classes]
  int num_classes() const { return static_cast<int>(weight.dim(0)); }
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string dataset_hash;
  std::vector<double> epoch_losses;
};

struct Descriptor {
  Eigen::VectorXd vector;
  int source_id = -1;
};

class EmbeddingModel {
 public:
  EmbeddingModel(ModelSpec spec, std::uint64_t init_seed);

  const ModelSpec& spec() const { return spec_; }
  // Kernel and bias per layer, in order.
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }

  // Places the parameters on the tape as constants or trainable leaves.
  std::vector<Var> bind(Tape& tape, bool trainable) const;

  // Records F(image) for image [C,H,W] (values in [0,255]); returns [1,D].
  Var forward(Var image, std::span<const Var> params) const;
  Var forward(Var image) const;

  Var logits(Var descriptor) const;

  std::optional<ClassifierHead> classifier;
  TrainingMetadata metadata;

 private:
  ModelSpec spec_;
  std::vector<Tensor> params_;
};

// f = F(image): unit-norm and deterministic.
Descriptor extract_descriptor(const EmbeddingModel& model, const Tensor& image, int source_id = -1);
std::vector<Descriptor> extract_descriptors(const EmbeddingModel& model,
                                            const std::vector<Tensor>& images);

struct VictimTrainingConfig {
  std::uint64_t seed = 0;
  int epochs = 12;
  double margin = 0.3;
  double learning_rate = 3e-3;
  int triplets_per_step = 8;
  // Random rescaling applied to every training image.
  ResizePolicy augmentation = ResizePolicy::random(32, 96);
};

// Triplet-loss training on the reference split with random semi-hard
// negatives. epochs == 0 returns the initialization.
EmbeddingModel train_victim(const RetrievalDataset& dataset, const ModelSpec& spec,
                            const VictimTrainingConfig& config);
// Continues triplet training from an existing model.
void train_embedding(EmbeddingModel& model, const RetrievalDataset& dataset,
                     const VictimTrainingConfig& config);

// Softmax classifier over frozen descriptors.
void train_classifier_head(EmbeddingModel& model, std::span<const Descriptor> descriptors,
                           std::span<const int> labels, int num_classes, std::uint64_t seed,
                           int epochs = 200);

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

// Adam over a fixed parameter list.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor>& params, double lr, double beta1 = 0.9, double beta2 = 0.999);
  void step(const std::vector<Tensor>& grads);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor>& params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_;
  int t_ = 0;
};

}  // namespace uapr

#endif  // UAPR_MODEL_HPP_
