#include "uapr/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "uapr/errors.hpp"

namespace uapr {
namespace {

// Precision at each rank holding a relevant item, counted from scratch.
double oracle_ap(const std::vector<int>& ranked, const std::set<int>& relevant) {
  double total = 0.0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (!relevant.count(ranked[r])) continue;
    int hits = 0;
    for (std::size_t i = 0; i <= r; ++i) hits += relevant.count(ranked[i]) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return total / static_cast<double>(relevant.size());
}

RetrievalDataset small_corpus(std::uint64_t seed = 0) {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.per_class = 5;
  spec.base_size = 32;
  spec.seed = seed;
  return synth_generate(spec);
}

TEST(AveragePrecision, HandValues) {
  const std::vector<int> ranked = {10, 11, 12, 13};
  EXPECT_DOUBLE_EQ(average_precision(ranked, {10, 11}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(ranked, {11}), 0.5);
  EXPECT_NEAR(average_precision(ranked, {10, 12}), 0.8333, 1e-4);
  EXPECT_THROW(average_precision(ranked, {}), MetricError);
}

TEST(AveragePrecision, MatchesEnumerationOnAllPermutations) {
  long checked = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int r = 1; r <= n; ++r) {
      std::set<int> relevant;
      for (int i = 0; i < r; ++i) relevant.insert(i);
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      do {
        ASSERT_EQ(average_precision(perm, relevant), oracle_ap(perm, relevant));
        ++checked;
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
  EXPECT_GT(checked, 300000);
}

TEST(PrecisionAtK, HandValues) {
  std::vector<int> ranked(12);
  std::iota(ranked.begin(), ranked.end(), 0);
  EXPECT_DOUBLE_EQ(precision_at_k(ranked, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 10), 1.0);
  EXPECT_DOUBLE_EQ(precision_at_k(ranked, {10, 11}, 10), 0.0);
  EXPECT_DOUBLE_EQ(precision_at_k(ranked, {0, 2, 3, 5, 6, 8, 9, 11}, 10), 0.7);
  EXPECT_THROW(precision_at_k(ranked, {0}, 0), MetricError);
}

TEST(PrecisionAtK, ShortListUsesPrefixAndFlagsIt) {
  const std::vector<int> ranked = {0, 1, 2, 3};
  bool truncated = false;
  EXPECT_DOUBLE_EQ(precision_at_k(ranked, {0, 2}, 10, &truncated), 0.5);
  EXPECT_TRUE(truncated);
  precision_at_k(ranked, {0, 2}, 4, &truncated);
  EXPECT_FALSE(truncated);
}

TEST(DroppingRate, HandValues) {
  EXPECT_DOUBLE_EQ(dropping_rate(0.6, 0.6), 0.0);
  EXPECT_NEAR(dropping_rate(0.8, 0.2), 75.0, 1e-12);
  EXPECT_DOUBLE_EQ(dropping_rate(0.3, 0.0), 100.0);
  EXPECT_THROW(dropping_rate(0.0, 0.0), MetricError);
}

TEST(RankByDistance, TiesBreakByIndex) {
  std::vector<Descriptor> refs = {{Eigen::Vector2d(1, 0), 7}, {Eigen::Vector2d(0, 1), 3}, {Eigen::Vector2d(0.5, 0), 9}};
  EXPECT_EQ(rank_by_distance(Eigen::Vector2d(0, 0), refs), (std::vector<int>{9, 3, 7}));
}

TEST(ScoreAttack, UndefinedDroppingRateBecomesWarning) {
  // Query 0 (class 0) has its only relevant reference ranked last in both runs.
  RetrievalDataset ds;
  ds.labels = {0, 1, 1, 0};
  ds.query_indices = {0};
  ds.reference_indices = {1, 2, 3};
  for (int i = 0; i < 4; ++i) ds.images.emplace_back(Shape{1, 2, 2});
  std::vector<Descriptor> d = {{Eigen::Vector2d(0, 0), 0}, {Eigen::Vector2d(1, 0), 1}, {Eigen::Vector2d(2, 0), 2},
                               {Eigen::Vector2d(3, 0), 3}};
  const MetricsReport r = score_attack(ds, d, d, true);
  EXPECT_NEAR(r.clean.map, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.clean.mp10, 1.0 / 3.0);
  EXPECT_EQ(r.mdr, 0.0);
  EXPECT_TRUE(r.warnings.empty());

  // Ten closer class-1 references push the relevant one out of the top 10,
  // so clean mP@10 is 0 and only the mAP rate enters mDR.
  RetrievalDataset far = ds;
  for (int i = 0; i < 10; ++i) {
    far.images.emplace_back(Shape{1, 2, 2});
    far.labels.push_back(1);
    far.reference_indices.push_back(4 + i);
    d.push_back({Eigen::Vector2d(0.1 * (i + 1), 0), 4 + i});
  }
  const MetricsReport r2 = score_attack(far, d, d, true);
  EXPECT_EQ(r2.clean.mp10, 0.0);
  ASSERT_EQ(r2.warnings.size(), 1u);
  EXPECT_EQ(r2.mdr, r2.dr_map);
}

TEST(EvaluateAttack, ZeroPerturbationGivesZeroDroppingRate) {
  const RetrievalDataset ds = small_corpus();
  const EmbeddingModel model(ModelSpec{}, 5);
  const MetricsReport r = evaluate_attack(model, ds, Perturbation::zeros(3, 64, 64, 10.0), EvalOptions{});
  EXPECT_EQ(r.mdr, 0.0);
  EXPECT_EQ(r.clean.ap, r.attacked.ap);
  EXPECT_EQ(r.clean.p10, r.attacked.p10);
}

TEST(EvaluateAttack, ReportsDifferOnlyInTimestamp) {
  const RetrievalDataset ds = small_corpus();
  const EmbeddingModel model(ModelSpec{}, 6);
  Perturbation p = Perturbation::zeros(3, 64, 64, 10.0);
  for (Index i = 0; i < p.delta.size(); ++i) p.delta[i] = (i % 7) - 3.0;
  auto a = evaluate_attack(model, ds, p, EvalOptions{}).to_json();
  auto b = evaluate_attack(model, ds, p, EvalOptions{}).to_json();
  EXPECT_FALSE(a["timestamp"].get<std::string>().empty());
  a.erase("timestamp");
  b.erase("timestamp");
  EXPECT_EQ(a, b);
}

TEST(EvaluateAttack, RejectsBadPerturbations) {
  const RetrievalDataset ds = small_corpus();
  const EmbeddingModel model(ModelSpec{}, 6);
  EXPECT_THROW(evaluate_attack(model, ds, Perturbation::zeros(1, 64, 64, 10.0), EvalOptions{}), ConfigurationError);
  Perturbation over = Perturbation::zeros(3, 8, 8, 10.0);
  over.delta[0] = 10.5;
  EXPECT_THROW(evaluate_attack(model, ds, over, EvalOptions{}), ConfigurationError);
}

TEST(EvaluateAttack, InvariantUnderClassRelabeling) {
  const RetrievalDataset ds = small_corpus();
  RetrievalDataset relabeled = ds;
  for (int& l : relabeled.labels) l = (l + 1) % 3;
  const EmbeddingModel model(ModelSpec{}, 7);
  Perturbation p = Perturbation::zeros(3, 64, 64, 10.0);
  for (Index i = 0; i < p.delta.size(); ++i) p.delta[i] = (i % 3 == 0) ? 10.0 : -10.0;
  const MetricsReport a = evaluate_attack(model, ds, p, EvalOptions{});
  const MetricsReport b = evaluate_attack(model, relabeled, p, EvalOptions{});
  EXPECT_EQ(a.clean.map, b.clean.map);
  EXPECT_EQ(a.attacked.map, b.attacked.map);
  EXPECT_EQ(a.mdr, b.mdr);
}

TEST(EvaluateAttack, QueryOnlyModeKeepsReferencesClean) {
  const RetrievalDataset ds = small_corpus();
  const EmbeddingModel model(ModelSpec{}, 8);
  Perturbation p = Perturbation::zeros(3, 64, 64, 10.0);
  p.delta.values().setConstant(10.0);
  EvalOptions only;
  only.perturb_references = false;
  const MetricsReport r = evaluate_attack(model, ds, p, only);
  // Oracle: attacked queries ranked against clean references.
  const auto clean = dataset_descriptors(model, ds, nullptr, only);
  const auto attacked = dataset_descriptors(model, ds, &p, only);
  std::vector<Descriptor> q, refs;
  for (int i : ds.query_indices) q.push_back(attacked[static_cast<std::size_t>(i)]);
  for (int i : ds.reference_indices) refs.push_back(clean[static_cast<std::size_t>(i)]);
  EXPECT_EQ(r.attacked.map, score_retrieval(ds, q, refs).map);
  EXPECT_EQ(r.config["perturb_references"], false);
}

TEST(TransferMatrix, DegenerateCases) {
  const RetrievalDataset ds = small_corpus();
  std::vector<EmbeddingModel> models = {EmbeddingModel(ModelSpec{}, 1), EmbeddingModel(ModelSpec{}, 2)};
  Perturbation p = Perturbation::zeros(3, 64, 64, 10.0);
  for (Index i = 0; i < p.delta.size(); ++i) p.delta[i] = (i % 5) * 5.0 - 10.0;
  const std::vector<Perturbation> one = {p};
  const Eigen::MatrixXd m1 = transfer_matrix(std::span(models).first(1), one, ds, EvalOptions{});
  ASSERT_EQ(m1.rows(), 1);
  EXPECT_EQ(m1(0, 0), evaluate_attack(models[0], ds, p, EvalOptions{}).mdr);

  const std::vector<Perturbation> two = {Perturbation::zeros(3, 64, 64, 10.0), p};
  const Eigen::MatrixXd m2 = transfer_matrix(models, two, ds, EvalOptions{});
  EXPECT_EQ(m2.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m2(1, 0), m1(0, 0));
  EXPECT_THROW(transfer_matrix(models, one, ds, EvalOptions{}), ConfigurationError);
}

TEST(MetricsReport, JsonAndCsvSchema) {
  const RetrievalDataset ds = small_corpus();
  const EmbeddingModel model(ModelSpec{}, 9);
  const MetricsReport r = evaluate_attack(model, ds, Perturbation::zeros(3, 64, 64, 10.0), EvalOptions{});
  const nlohmann::json j = r.to_json();
  for (const char* key : {"config", "timestamp", "clean", "attacked", "dropping_rate", "mDR", "per_query", "warnings"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["per_query"].size(), ds.query_indices.size());
  for (const auto& q : j["per_query"]) {
    for (const char* m : {"ap_clean", "ap_attacked", "p10_clean", "p10_attacked"}) {
      EXPECT_GE(q[m].get<double>(), 0.0);
      EXPECT_LE(q[m].get<double>(), 1.0);
    }
  }
  std::istringstream csv(r.to_csv());
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "row,ap_clean,ap_attacked,p10_clean,p10_attacked");
  int rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
    ++rows;
  }
  EXPECT_EQ(rows, static_cast<int>(ds.query_indices.size()) + 3);
}

}  // namespace
}  // namespace uapr
