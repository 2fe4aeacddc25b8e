#ifndef UAPR_METRICS_HPP_
#define UAPR_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "uapr/dataset.hpp"
#include "uapr/model.hpp"
#include "uapr/perturbation.hpp"
#include "uapr/resizing.hpp"

namespace uapr {

// Mean of precision@rank over the ranks holding relevant items.
double average_precision(std::span<const int> ranked, const std::set<int>& relevant);

// |relevant ∩ top-k| / k. A list shorter than k is scored over its prefix
// and `truncated` (when given) is set.
double precision_at_k(std::span<const int> ranked, const std::set<int>& relevant, int k,
                      bool* truncated = nullptr);

// (clean - attacked) / clean * 100.
double dropping_rate(double clean, double attacked);

// Reference ids sorted by ascending distance to `query`; ties by id.
std::vector<int> rank_by_distance(const Eigen::VectorXd& query,
                                  std::span<const Descriptor> references);

struct RetrievalScores {
  std::vector<double> ap;
  std::vector<double> p10;
  double map = 0.0;
  double mp10 = 0.0;
};

// Scores the dataset's query/reference split; `descriptors` is indexed by
// dataset position.
RetrievalScores score_retrieval(const RetrievalDataset& dataset,
                                std::span<const Descriptor> query_descriptors,
                                std::span<const Descriptor> reference_descriptors);

struct EvalOptions {
  ResizePolicy policy = ResizePolicy::random(32, 96);
  std::uint64_t seed = 0;
  // Perturb references too; false gives the query-only ablation.
  bool perturb_references = true;
};

struct MetricsReport {
  RetrievalScores clean;
  RetrievalScores attacked;
  double dr_map = 0.0;
  double dr_mp10 = 0.0;
  double mdr = 0.0;
  std::vector<std::string> warnings;
  nlohmann::json config = nlohmann::json::object();
  std::string timestamp;

  nlohmann::json to_json() const;
  // One row per query plus an aggregate row.
  std::string to_csv() const;
};

// Descriptors of every dataset image after R_I (and R_P(delta) when given),
// with the draw for image i keyed on (options.seed, i).
std::vector<Descriptor> dataset_descriptors(const EmbeddingModel& model, const RetrievalDataset& dataset,
                                            const Perturbation* perturbation, const EvalOptions& options);

// Scores precomputed clean and attacked descriptors (indexed by dataset
// position). Leaves config and timestamp empty.
MetricsReport score_attack(const RetrievalDataset& dataset, const std::vector<Descriptor>& clean,
                           const std::vector<Descriptor>& attacked, bool perturb_references);

// Clean vs. attacked retrieval under a shared resize draw per image.
MetricsReport evaluate_attack(const EmbeddingModel& model, const RetrievalDataset& dataset,
                              const Perturbation& perturbation, const EvalOptions& options);

// Entry (s, t): mDR of perturbations[s] evaluated on models[t].
Eigen::MatrixXd transfer_matrix(std::span<const EmbeddingModel> models,
                                std::span<const Perturbation> perturbations,
                                const RetrievalDataset& dataset, const EvalOptions& options);

}  // namespace uapr

#endif  // UAPR_METRICS_HPP_
