#include "uapr/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <numeric>
#include <sstream>

namespace uapr {

double average_precision(std::span<const int> ranked, const std::set<int>& relevant) {
  if (relevant.empty()) throw MetricError("average precision is undefined for an empty relevant set");
  double sum = 0.0;
  int hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (relevant.count(ranked[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double precision_at_k(std::span<const int> ranked, const std::set<int>& relevant, int k, bool* truncated) {
  if (k < 1) throw MetricError("precision@k needs k >= 1");
  const std::size_t n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  if (truncated) *truncated = n < static_cast<std::size_t>(k);
  if (n == 0) return 0.0;
  int hits = 0;
  for (std::size_t r = 0; r < n; ++r) hits += relevant.count(ranked[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(n);
}

double dropping_rate(double clean, double attacked) {
  if (!(clean > 0.0)) throw MetricError("dropping rate is undefined for a clean metric of 0");
  return (clean - attacked) / clean * 100.0;
}

std::vector<int> rank_by_distance(const Eigen::VectorXd& query, std::span<const Descriptor> references) {
  std::vector<std::pair<double, int>> order;
  order.reserve(references.size());
  for (const Descriptor& r : references) order.emplace_back((r.vector - query).norm(), r.source_id);
  std::sort(order.begin(), order.end());
  std::vector<int> ids;
  ids.reserve(order.size());
  for (const auto& [d, id] : order) ids.push_back(id);
  return ids;
}

RetrievalScores score_retrieval(const RetrievalDataset& dataset, std::span<const Descriptor> queries,
                                std::span<const Descriptor> references) {
  RetrievalScores s;
  for (const Descriptor& q : queries) {
    const int label = dataset.labels[static_cast<std::size_t>(q.source_id)];
    std::set<int> relevant;
    for (const Descriptor& r : references) {
      if (dataset.labels[static_cast<std::size_t>(r.source_id)] == label) relevant.insert(r.source_id);
    }
    const std::vector<int> ranked = rank_by_distance(q.vector, references);
    s.ap.push_back(average_precision(ranked, relevant));
    s.p10.push_back(precision_at_k(ranked, relevant, 10));
  }
  if (!s.ap.empty()) {
    s.map = std::accumulate(s.ap.begin(), s.ap.end(), 0.0) / static_cast<double>(s.ap.size());
    s.mp10 = std::accumulate(s.p10.begin(), s.p10.end(), 0.0) / static_cast<double>(s.p10.size());
  }
  return s;
}

std::vector<Descriptor> dataset_descriptors(const EmbeddingModel& model, const RetrievalDataset& dataset,
                                            const Perturbation* perturbation, const EvalOptions& options) {
  ResizePolicy policy = options.policy;
  policy.seed = options.seed;
  std::vector<Descriptor> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto [img, size] = random_input_resize(policy, dataset.images[i], i);
    Tape tape;
    Var x = tape.constant(img);
    if (perturbation) {
      x = apply_perturbation(x, perturbation_resize(tape.constant(perturbation->delta), size.h, size.w));
    }
    out.push_back({model.forward(x).value().vector(), static_cast<int>(i)});
  }
  return out;
}

namespace {

std::vector<Descriptor> select(const std::vector<Descriptor>& all, const std::vector<int>& ids) {
  std::vector<Descriptor> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(all[static_cast<std::size_t>(i)]);
  return out;
}

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

MetricsReport score_attack(const RetrievalDataset& dataset, const std::vector<Descriptor>& clean,
                           const std::vector<Descriptor>& attacked, bool perturb_references) {
  MetricsReport report;
  const std::vector<Descriptor> clean_refs = select(clean, dataset.reference_indices);
  report.clean = score_retrieval(dataset, select(clean, dataset.query_indices), clean_refs);
  report.attacked = score_retrieval(dataset, select(attacked, dataset.query_indices),
                                    perturb_references ? select(attacked, dataset.reference_indices)
                                                               : clean_refs);
  std::vector<double> drs;
  auto dr = [&](double c, double a, const char* name, double& slot) {
    if (c > 0.0) {
      slot = dropping_rate(c, a);
      drs.push_back(slot);
    } else {
      report.warnings.push_back(std::string("clean ") + name + " is 0; excluded from mDR");
    }
  };
  dr(report.clean.map, report.attacked.map, "mAP", report.dr_map);
  dr(report.clean.mp10, report.attacked.mp10, "mP@10", report.dr_mp10);
  report.mdr = drs.empty() ? 0.0 : std::accumulate(drs.begin(), drs.end(), 0.0) / static_cast<double>(drs.size());

  return report;
}

MetricsReport evaluate_attack(const EmbeddingModel& model, const RetrievalDataset& dataset,
                              const Perturbation& perturbation, const EvalOptions& options) {
  if (perturbation.delta.rank() != 3 || perturbation.delta.dim(0) != model.spec().in_channels) {
    throw ConfigurationError("perturbation " + perturbation.delta.shape().str() +
                             " does not match the model's input channels");
  }
  if (!perturbation.within_budget()) throw ConfigurationError("perturbation exceeds its L-inf budget");

  const std::vector<Descriptor> clean = dataset_descriptors(model, dataset, nullptr, options);
  const std::vector<Descriptor> attacked = dataset_descriptors(model, dataset, &perturbation, options);

  MetricsReport report = score_attack(dataset, clean, attacked, options.perturb_references);

  const ResizePolicy& p = options.policy;
  report.config = {{"dataset", dataset.provenance.description},
                   {"dataset_hash", dataset.hash()},
                   {"model_pooling", pooling_name(model.spec().pooling)},
                   {"epsilon", perturbation.epsilon},
                   {"resize_mode", p.mode == ResizeMode::kRandom  ? "random"
                                   : p.mode == ResizeMode::kFixed ? "fixed"
                                                                  : "native"},
                   {"resize_min", p.min_side},
                   {"resize_max", p.max_side},
                   {"aspect_bound", p.aspect_distortion_bound},
                   {"fixed_h", p.fixed_h},
                   {"fixed_w", p.fixed_w},
                   {"seed", options.seed},
                   {"perturb_references", options.perturb_references}};
  report.timestamp = now_iso8601();
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per_query = nlohmann::json::array();
  for (std::size_t i = 0; i < clean.ap.size(); ++i) {
    per_query.push_back({{"ap_clean", clean.ap[i]},
                         {"ap_attacked", attacked.ap[i]},
                         {"p10_clean", clean.p10[i]},
                         {"p10_attacked", attacked.p10[i]}});
  }
  return {{"config", config},
          {"timestamp", timestamp},
          {"clean", {{"mAP", clean.map}, {"mP@10", clean.mp10}}},
          {"attacked", {{"mAP", attacked.map}, {"mP@10", attacked.mp10}}},
          {"dropping_rate", {{"mAP", dr_map}, {"mP@10", dr_mp10}}},
          {"mDR", mdr},
          {"per_query", per_query},
          {"warnings", warnings}};
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "row,ap_clean,ap_attacked,p10_clean,p10_attacked\n";
  for (std::size_t i = 0; i < clean.ap.size(); ++i) {
    os << "query" << i << ',' << clean.ap[i] << ',' << attacked.ap[i] << ',' << clean.p10[i] << ','
       << attacked.p10[i] << '\n';
  }
  os << "mean," << clean.map << ',' << attacked.map << ',' << clean.mp10 << ',' << attacked.mp10 << '\n';
  os << "dropping_rate_pct,," << dr_map << ",," << dr_mp10 << '\n';
  os << "mDR_pct,," << mdr << ",,\n";
  return os.str();
}

Eigen::MatrixXd transfer_matrix(std::span<const EmbeddingModel> models, std::span<const Perturbation> perturbations,
                                const RetrievalDataset& dataset, const EvalOptions& options) {
  if (models.size() != perturbations.size()) {
    throw ConfigurationError("transfer matrix needs one perturbation per source model");
  }
  const auto n = static_cast<Index>(models.size());
  Eigen::MatrixXd m(n, n);
  for (Index s = 0; s < n; ++s) {
    for (Index t = 0; t < n; ++t) {
      m(s, t) = evaluate_attack(models[static_cast<std::size_t>(t)], dataset,
                                perturbations[static_cast<std::size_t>(s)], options)
                    .mdr;
    }
  }
  return m;
}

}  // namespace uapr
