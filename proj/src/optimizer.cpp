#include "uapr/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "uapr/errors.hpp"
#include "uapr/random.hpp"

namespace uapr {

namespace {

// Offset separating the evaluation draws from the training draws.
constexpr std::uint64_t kEvalSeedOffset = 0x9e3779b97f4a7c15ULL;

Var constant_descriptor(Tape& tape, const Descriptor& d) {
  return tape.constant(Tensor(Shape{1, d.vector.size()}, Tensor::Array(d.vector.array())));
}

}  // namespace

OptimizerState OptimizerState::for_perturbation(const Perturbation& p, double mu, double learning_rate,
                                                double saturation_threshold) {
  OptimizerState s;
  s.momentum = Tensor(p.delta.shape());
  s.mu = mu;
  s.learning_rate = learning_rate;
  s.saturation_threshold = saturation_threshold;
  return s;
}

bool momentum_step(OptimizerState& state, Perturbation& pert, const Tensor& grad) {
  if (grad.shape() != pert.delta.shape()) {
    throw DimensionError("gradient " + grad.shape().str() + " vs perturbation " + pert.delta.shape().str());
  }
  if (state.momentum.shape() != pert.delta.shape()) {
    throw DimensionError("momentum " + state.momentum.shape().str() + " vs perturbation " +
                         pert.delta.shape().str());
  }
  ++state.iteration;
  const double l1 = grad.values().abs().sum();
  if (!std::isfinite(l1)) throw NumericError("non-finite perturbation gradient");
  if (l1 == 0.0) return false;
  state.momentum.values() = state.mu * state.momentum.values() + grad.values() / l1;
  pert.delta.values() += state.learning_rate * state.momentum.values().sign();
  pert.delta.values() = pert.delta.values().max(-pert.epsilon).min(pert.epsilon);
  return true;
}

bool saturation_rescale(Perturbation& pert, double threshold, OptimizerState* state) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigurationError("saturation threshold must lie in (0, 1]");
  const auto saturated = (pert.delta.values().abs() >= 0.99 * pert.epsilon).count();
  if (static_cast<double>(saturated) < threshold * static_cast<double>(pert.delta.size())) return false;
  pert.delta.values() *= 0.5;
  if (state) state->momentum.values().setZero();
  return true;
}

void UapConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigurationError("epsilon must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning rate must be > 0");
  if (!(momentum >= 0.0)) throw ConfigurationError("momentum must be >= 0");
  if (!(saturation_threshold > 0.0 && saturation_threshold <= 1.0)) {
    throw ConfigurationError("saturation threshold must lie in (0, 1]");
  }
  if (max_epochs < 1) throw ConfigurationError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigurationError("patience must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigurationError("pair-wise margin must be >= 0");
  if (per_anchor < 1) throw ConfigurationError("per_anchor must be >= 1");
  if (batch < 1) throw ConfigurationError("batch must be >= 1");
  if (base_h < 1 || base_w < 1) throw ConfigurationError("perturbation base size must be positive");
  policy.validate();
}

LandmarkModel fit_landmarks(const EmbeddingModel& model, const RetrievalDataset& dataset, int k,
                            const ResizePolicy& policy, std::uint64_t seed) {
  const std::vector<Descriptor> clean = dataset_descriptors(model, dataset, nullptr, {policy, seed, true});
  return kmeans_fit(clean, k, seed);
}

void fit_pseudo_label_head(EmbeddingModel& model, const RetrievalDataset& dataset, const LandmarkModel& lm,
                           const ResizePolicy& policy, std::uint64_t seed) {
  if (lm.assignments.size() != dataset.size()) {
    throw ConfigurationError("landmarks were fitted on a different dataset");
  }
  const std::vector<Descriptor> clean = dataset_descriptors(model, dataset, nullptr, {policy, seed, true});
  train_classifier_head(model, clean, lm.assignments, lm.k(), seed);
}

Perturbation run_uap_training(const EmbeddingModel& model, const RetrievalDataset& dataset,
                              const LandmarkModel& lm, const UapConfig& config, UapTrace* trace) {
  config.validate();
  dataset.validate();
  if (lm.assignments.size() != dataset.size()) {
    throw ConfigurationError("landmark assignments cover " + std::to_string(lm.assignments.size()) +
                             " images but the dataset has " + std::to_string(dataset.size()));
  }
  if (lm.centroids.cols() != model.spec().descriptor_dim()) {
    throw ConfigurationError("landmark dimension does not match the model's descriptor");
  }
  if (config.objective == ObjectiveKind::kLabelWise) {
    if (!model.classifier) throw ConfigurationError("label-wise objective needs a classifier head");
    if (model.classifier->num_classes() != lm.k()) {
      throw ConfigurationError("classifier head has " + std::to_string(model.classifier->num_classes()) +
                               " classes but there are " + std::to_string(lm.k()) + " landmarks");
    }
    if (lm.k() < 2) throw ConfigurationError("label-wise objective needs at least 2 landmarks");
  }

  UapTrace local;
  UapTrace& tr = trace ? *trace : local;
  tr = UapTrace{};

  const EvalOptions eval{config.policy, config.seed ^ kEvalSeedOffset, true};
  const std::vector<Descriptor> clean = dataset_descriptors(model, dataset, nullptr, eval);

  ResizePolicy train_policy = config.policy;
  train_policy.seed = config.seed;

  Perturbation pert = Perturbation::zeros(model.spec().in_channels, config.base_h, config.base_w, config.epsilon);
  OptimizerState state =
      OptimizerState::for_perturbation(pert, config.momentum, config.learning_rate, config.saturation_threshold);
  Perturbation best = pert;
  tr.best_mdr = -std::numeric_limits<double>::infinity();

  // Gradient of the objective for one datapoint, signed so that adding it
  // strengthens the attack.
  auto datapoint_gradient = [&](int i, std::uint64_t draw) {
    const auto [img, size] = random_input_resize(train_policy, dataset.images[static_cast<std::size_t>(i)], draw);
    Tape tape;
    Var dv = tape.variable(pert.delta);
    Var x = apply_perturbation(tape.constant(img), perturbation_resize(dv, size.h, size.w));
    Var f = model.forward(x);
    switch (config.objective) {
      case ObjectiveKind::kLabelWise: {
        Var loss = labelwise_loss(model.logits(f), lm.assignments[static_cast<std::size_t>(i)]);
        tape.backward(loss);
        Tensor g = tape.grad(dv);
        g.values() = -g.values();
        return g;
      }
      case ObjectiveKind::kPairWise: {
        const TupleSet ts = build_anchor_tuples(lm, i, config.per_anchor, config.seed + draw);
        if (ts.tuples.empty()) return Tensor(pert.delta.shape());
        std::vector<Var> neg, pos;
        for (const RelationTuple& t : ts.tuples) {
          neg.push_back(constant_descriptor(tape, clean[static_cast<std::size_t>(t.far_negative)]));
          pos.push_back(constant_descriptor(tape, clean[static_cast<std::size_t>(t.near_positive)]));
        }
        tape.backward(pairwise_loss(f, neg, pos, config.alpha));
        Tensor g = tape.grad(dv);
        g.values() = -g.values();
        return g;
      }
      case ObjectiveKind::kListWise: {
        Tensor g(pert.delta.shape());
        for (int r = 0; r < config.per_anchor; ++r) {
          const RankingSubset s =
              sample_ranking_subset(lm, i, (config.seed + draw) * static_cast<std::uint64_t>(config.per_anchor) + r);
          std::vector<Var> members;
          for (int m : s.member_indices) members.push_back(constant_descriptor(tape, clean[static_cast<std::size_t>(m)]));
          g.values() += listwise_gradient(s.ratings, f, members, dv).values();
        }
        return g;
      }
    }
    return Tensor(pert.delta.shape());
  };

  std::vector<int> order(dataset.size());
  std::uint64_t draw = 0;
  int stale = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto rng = keyed_rng(config.seed, static_cast<std::uint64_t>(epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      Tensor grad(pert.delta.shape());
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      for (std::size_t b = start; b < stop; ++b) grad.values() += datapoint_gradient(order[b], draw++).values();
      if (!momentum_step(state, pert, grad)) ++tr.skipped_steps;
      ++tr.iterations;
      tr.max_linf = std::max(tr.max_linf, pert.linf());
      if (saturation_rescale(pert, config.saturation_threshold, &state)) ++tr.rescales;
      if (!(pert.linf() <= pert.epsilon)) throw NumericError("perturbation left its L-inf budget");
    }

    const std::vector<Descriptor> attacked = dataset_descriptors(model, dataset, &pert, eval);
    const double mdr = score_attack(dataset, clean, attacked, true).mdr;
    tr.epoch_mdr.push_back(mdr);
    const double previous = tr.best_mdr;
    if (mdr > tr.best_mdr) {
      tr.best_mdr = mdr;
      tr.best_epoch = epoch;
      best = pert;
    }
    const bool improved = epoch == 0 || mdr - previous >= config.min_relative_improvement * std::abs(previous);
    stale = improved ? 0 : stale + 1;
    if (stale >= config.patience) break;
  }

  best.info = {{"objective", objective_name(config.objective)},
               {"epsilon", config.epsilon},
               {"learning_rate", config.learning_rate},
               {"momentum", config.momentum},
               {"saturation_threshold", config.saturation_threshold},
               {"alpha", config.alpha},
               {"per_anchor", config.per_anchor},
               {"batch", config.batch},
               {"seed", config.seed},
               {"resize_min", config.policy.min_side},
               {"resize_max", config.policy.max_side},
               {"resize_mode", config.policy.mode == ResizeMode::kRandom ? "random" : "fixed"},
               {"landmarks", lm.k()},
               {"dataset_hash", dataset.hash()},
               {"epoch_mdr", tr.epoch_mdr},
               {"best_epoch", tr.best_epoch},
               {"training_mdr", tr.best_mdr},
               {"iterations", tr.iterations},
               {"rescales", tr.rescales}};
  return best;
}

}  // namespace uapr
