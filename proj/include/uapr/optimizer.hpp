#ifndef UAPR_OPTIMIZER_HPP_
#define UAPR_OPTIMIZER_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "uapr/dataset.hpp"
#include "uapr/landmarks.hpp"
#include "uapr/metrics.hpp"
#include "uapr/model.hpp"
#include "uapr/objectives.hpp"
#include "uapr/perturbation.hpp"
#include "uapr/resizing.hpp"

namespace uapr {

struct OptimizerState {
  Tensor momentum;
  double mu = 1.0;
  double learning_rate = 1.0;
  long iteration = 0;
  double saturation_threshold = 1.0;

  static OptimizerState for_perturbation(const Perturbation& p, double mu, double learning_rate,
                                         double saturation_threshold);
};

// g <- mu g + grad / |grad|_1;  delta <- clamp(delta + lr sign(g), -eps, eps).
// An all-zero gradient skips the update but still advances the counter.
// Returns whether an update was applied.
bool momentum_step(OptimizerState& state, Perturbation& pert, const Tensor& grad);

// Halves delta (and resets momentum) once the fraction of entries with
// |delta| >= 0.99 eps reaches `threshold`.
bool saturation_rescale(Perturbation& pert, double threshold, OptimizerState* state = nullptr);

struct UapConfig {
  ObjectiveKind objective = ObjectiveKind::kListWise;
  double epsilon = 10.0;
  double learning_rate = 1.0;
  double momentum = 1.0;
  // Halve only once every entry is pinned at the budget.
  double saturation_threshold = 1.0;
  int max_epochs = 20;
  int patience = 3;
  double min_relative_improvement = 0.01;
  double alpha = 0.1;
  int per_anchor = 4;
  int batch = 1;
  std::uint64_t seed = 0;
  int base_h = 64;
  int base_w = 64;
  ResizePolicy policy = ResizePolicy::random(32, 96);

  void validate() const;
};

struct UapTrace {
  std::vector<double> epoch_mdr;
  int best_epoch = -1;
  double best_mdr = 0.0;
  long iterations = 0;
  long skipped_steps = 0;
  int rescales = 0;
  double max_linf = 0.0;  // largest |delta|_inf observed after any update
};

// Clean descriptors of every dataset image under `policy` (draw i keyed on
// (seed, i)) clustered into k landmarks.
LandmarkModel fit_landmarks(const EmbeddingModel& model, const RetrievalDataset& dataset, int k,
                            const ResizePolicy& policy, std::uint64_t seed);

// Fits the pseudo-label classifier consumed by the label-wise objective.
void fit_pseudo_label_head(EmbeddingModel& model, const RetrievalDataset& dataset, const LandmarkModel& lm,
                           const ResizePolicy& policy, std::uint64_t seed);

// Universal perturbation by momentum-sign updates over single datapoints
// (or mini-batches), returning the best epoch by training-set mDR.
Perturbation run_uap_training(const EmbeddingModel& model, const RetrievalDataset& dataset,
                              const LandmarkModel& lm, const UapConfig& config, UapTrace* trace = nullptr);

}  // namespace uapr

#endif  // UAPR_OPTIMIZER_HPP_
