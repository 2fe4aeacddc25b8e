#include "uapr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uapr/errors.hpp"

namespace uapr {

const char* objective_name(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kLabelWise: return "label";
    case ObjectiveKind::kPairWise: return "pair";
    case ObjectiveKind::kListWise: return "list";
  }
  return "?";
}

ObjectiveKind parse_objective(const std::string& name) {
  if (name == "label" || name == "label-wise" || name == "labelwise") return ObjectiveKind::kLabelWise;
  if (name == "pair" || name == "pair-wise" || name == "pairwise") return ObjectiveKind::kPairWise;
  if (name == "list" || name == "list-wise" || name == "listwise") return ObjectiveKind::kListWise;
  throw ConfigurationError("unknown objective '" + name + "' (expected label, pair or list)");
}

Var labelwise_loss(Var logits, int target) {
  const Tensor& z = logits.value();
  const Index k = z.size();
  if (k < 2) throw ConfigurationError("label-wise loss needs at least 2 classes");
  if (target < 0 || target >= k) throw IndexError("label-wise target " + std::to_string(target) + " out of range");
  Index runner_up = -1;
  for (Index i = 0; i < k; ++i) {
    if (i != target && (runner_up < 0 || z[i] > z[runner_up])) runner_up = i;
  }
  return relu(sub(pick(logits, target), pick(logits, runner_up)));
}

Var pairwise_loss(Var anchor_adv, Var far_negative, Var near_positive, double alpha) {
  if (alpha < 0.0) throw ConfigurationError("pair-wise margin must be >= 0");
  return relu(add_scalar(sub(euclidean_distance(far_negative, anchor_adv), euclidean_distance(near_positive, anchor_adv)),
                         alpha));
}

Var pairwise_loss(Var anchor_adv, std::span<const Var> far_negatives, std::span<const Var> near_positives,
                  double alpha) {
  if (far_negatives.size() != near_positives.size()) {
    throw DimensionError("pair-wise batch: negatives and positives differ in count");
  }
  if (far_negatives.empty()) return anchor_adv.tape().constant(Tensor::scalar(0.0));
  std::vector<Var> terms;
  terms.reserve(far_negatives.size());
  for (std::size_t i = 0; i < far_negatives.size(); ++i) {
    terms.push_back(pairwise_loss(anchor_adv, far_negatives[i], near_positives[i], alpha));
  }
  return add_n(anchor_adv.tape(), terms);
}

namespace {

double gain(int y) { return std::exp2(static_cast<double>(y)) - 1.0; }
double discount(std::size_t pos) { return 1.0 / std::log2(static_cast<double>(pos) + 2.0); }

double ideal_dcg(std::span<const int> ratings) {
  std::vector<int> sorted(ratings.begin(), ratings.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return dcg(sorted);
}

}  // namespace

double dcg(std::span<const int> ratings) {
  double s = 0.0;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (ratings[i] < 0) throw DomainError("ratings must be >= 0");
    s += gain(ratings[i]) * discount(i);
  }
  return s;
}

double ndcg(std::span<const int> ratings) {
  const double ideal = ideal_dcg(ratings);
  if (!(ideal > 0.0)) throw MetricError("NDCG is undefined when every rating is 0");
  return dcg(ratings) / ideal;
}

double delta_ndcg_swap(std::span<const int> ratings, std::size_t a, std::size_t b) {
  if (a >= ratings.size() || b >= ratings.size()) {
    throw IndexError("swap positions " + std::to_string(a) + "," + std::to_string(b) + " outside a list of " +
                     std::to_string(ratings.size()));
  }
  if (a == b) throw IndexError("swap positions must differ");
  const double ideal = ideal_dcg(ratings);
  if (!(ideal > 0.0)) throw MetricError("NDCG is undefined when every rating is 0");
  return std::abs((gain(ratings[a]) - gain(ratings[b])) * (discount(a) - discount(b))) / ideal;
}

double lambda_weight(double d_j, double d_k, double delta) {
  if (delta < 0.0) throw DomainError("lambda weight needs delta >= 0");
  return -delta / (1.0 + std::exp(d_j - d_k));
}

ListwiseTerms listwise_terms(std::span<const int> ratings, std::span<const double> distances) {
  if (ratings.size() != distances.size()) throw DimensionError("list-wise: ratings and distances differ in length");
  const std::size_t n = ratings.size();
  ListwiseTerms t;
  t.coefficients.assign(n, 0.0);
  t.current_order.resize(n);
  std::iota(t.current_order.begin(), t.current_order.end(), 0);
  std::stable_sort(t.current_order.begin(), t.current_order.end(),
                   [&](int a, int b) { return distances[static_cast<std::size_t>(a)] < distances[static_cast<std::size_t>(b)]; });
  if (n < 2) return t;
  std::vector<int> listed(n);
  for (std::size_t p = 0; p < n; ++p) listed[p] = ratings[static_cast<std::size_t>(t.current_order[p])];
  t.ndcg = ndcg(listed);
  for (std::size_t pj = 0; pj < n; ++pj) {
    for (std::size_t pk = pj + 1; pk < n; ++pk) {
      if (listed[pj] >= listed[pk]) continue;
      const auto j = static_cast<std::size_t>(t.current_order[pj]);
      const auto k = static_cast<std::size_t>(t.current_order[pk]);
      const double lambda = lambda_weight(distances[j], distances[k], delta_ndcg_swap(listed, pj, pk));
      // Raise d_j and lower d_k.
      t.coefficients[j] -= lambda;
      t.coefficients[k] += lambda;
      ++t.violations;
    }
  }
  return t;
}

Tensor listwise_gradient(std::span<const int> ratings, Var query_adv, std::span<const Var> members, Var wrt,
                         ListwiseTerms* terms) {
  if (ratings.size() != members.size()) throw DimensionError("list-wise: ratings and members differ in length");
  Tape& tape = query_adv.tape();
  if (members.size() < 2) {
    if (terms) *terms = listwise_terms(ratings, std::vector<double>(members.size(), 0.0));
    return Tensor(wrt.shape());
  }
  std::vector<Var> dist;
  std::vector<double> values;
  for (const Var& m : members) {
    dist.push_back(euclidean_distance(query_adv, m));
    values.push_back(dist.back().value().item());
  }
  ListwiseTerms t = listwise_terms(ratings, values);
  std::vector<Var> weighted;
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (t.coefficients[m] != 0.0) weighted.push_back(scale(dist[m], t.coefficients[m]));
  }
  Tensor g(wrt.shape());
  if (!weighted.empty()) {
    tape.zero_grad();
    tape.backward(add_n(tape, weighted));
    g = tape.grad(wrt);
  }
  if (terms) *terms = std::move(t);
  return g;
}

}  // namespace uapr
