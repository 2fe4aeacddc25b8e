#ifndef UAPR_DISTILL_HPP_
#define UAPR_DISTILL_HPP_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "uapr/dataset.hpp"
#include "uapr/errors.hpp"
#include "uapr/model.hpp"
#include "uapr/resizing.hpp"

namespace uapr {

// Black-box retrieval system: returns every reference id, most similar first.
class RankingOracle {
 public:
  virtual ~RankingOracle() = default;
  virtual std::vector<int> query(const Tensor& image) = 0;
};

// Ranks the references of `corpus` with a local model. Query images are
// embedded at their given size.
class VictimOracle : public RankingOracle {
 public:
  VictimOracle(const EmbeddingModel& victim, const RetrievalDataset& corpus);
  std::vector<int> query(const Tensor& image) override;

 private:
  const EmbeddingModel& victim_;
  std::vector<Descriptor> references_;
};

// File exchange with an external system. Query n is written as
// `query_<n>.png`; the answer is read from `query_<n>.txt`, one reference
// id per line. Throws OracleError on timeout or a malformed answer.
class DirectoryOracle : public RankingOracle {
 public:
  DirectoryOracle(std::filesystem::path dir, std::vector<int> reference_ids,
                  std::chrono::milliseconds timeout = std::chrono::seconds(30),
                  std::chrono::milliseconds poll = std::chrono::milliseconds(20));
  std::vector<int> query(const Tensor& image) override;

 private:
  std::filesystem::path dir_;
  std::vector<int> reference_ids_;
  std::chrono::milliseconds timeout_, poll_;
  long next_ = 0;
};

// Stored oracle answers. `lists[i]` answers query i; `query_count` counts
// every oracle call, retries included.
struct RankingStore {
  std::vector<std::vector<int>> lists;
  long query_count = 0;
  bool complete(std::size_t num_queries) const { return lists.size() == num_queries; }
};

void save_rankings(const RankingStore& store, const std::filesystem::path& path);
RankingStore load_rankings(const std::filesystem::path& path);

// Raised when collection stops early; `partial` holds everything gathered so
// far and can be passed back as `resume`.
class CollectionError : public OracleError {
 public:
  CollectionError(const std::string& what, RankingStore partial, std::vector<int> missing)
      : OracleError(what), partial(std::move(partial)), missing(std::move(missing)) {}
  RankingStore partial;
  std::vector<int> missing;  // query positions without an answer
};

struct CollectionPolicy {
  int retries = 2;     // extra attempts per query after a failure
  long budget = -1;    // maximum oracle calls; negative means unlimited
};

// Queries the oracle for every image not yet answered in `resume`.
RankingStore collect_rankings(RankingOracle& oracle, std::span<const Tensor> queries,
                              const CollectionPolicy& policy = {}, const RankingStore* resume = nullptr);

// Contiguous bins over the list (leading bins take the remainder), one
// uniform pick per bin, in bin order.
std::vector<int> bin_and_sample(std::span<const int> ranking, int num_bins, std::uint64_t seed);

// Sum over n < m of lambda_m [d(q, r_n) - d(q, r_m) + beta]_+ with
// lambda_m = 1 / log2(m + 1), m counted from 1. `refs` are most similar first.
Var ordinal_regression_loss(Var query, std::span<const Var> refs, double beta);

struct DistillationConfig {
  int num_bins = 32;
  int top_k = 10;
  double margin_coarse = 0.2;
  double margin_fine = 0.05;
  int coarse_epochs = 6;
  int fine_epochs = 3;
  double learning_rate_coarse = 2e-3;
  double learning_rate_fine = 5e-4;
  int queries_per_step = 4;
  std::uint64_t seed = 0;
  ResizePolicy augmentation = ResizePolicy::random(32, 96);
  CollectionPolicy collection;

  void validate() const;
};

struct DistillationReport {
  long oracle_queries = 0;
  std::vector<double> coarse_losses;  // mean loss per epoch
  std::vector<double> fine_losses;
};

// Coarse-to-fine ordinal regression of `initial` onto the oracle's rankings.
// List entries are indices into `corpus`.
EmbeddingModel distill(const RankingStore& rankings, std::span<const Tensor> queries, const RetrievalDataset& corpus,
                       const EmbeddingModel& initial, const DistillationConfig& config,
                       DistillationReport* report = nullptr);

// Collects (or resumes) rankings, then distills.
EmbeddingModel distill(RankingOracle& oracle, std::span<const Tensor> queries, const RetrievalDataset& corpus,
                       const EmbeddingModel& initial, const DistillationConfig& config,
                       DistillationReport* report = nullptr, const RankingStore* resume = nullptr);

// Generic-feature substitute: triplet training on an unrelated corpus.
EmbeddingModel pretrain_substitute(const ModelSpec& spec, std::uint64_t seed, int epochs = 6);

// Mean fraction of the oracle's top-k found in the model's top-k.
double topk_overlap(const EmbeddingModel& model, RankingOracle& oracle, std::span<const Tensor> queries,
                    const RetrievalDataset& corpus, int k);

}  // namespace uapr

#endif  // UAPR_DISTILL_HPP_
