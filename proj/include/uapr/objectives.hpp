#ifndef UAPR_OBJECTIVES_HPP_
#define UAPR_OBJECTIVES_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uapr/autodiff.hpp"

namespace uapr {

enum class ObjectiveKind { kLabelWise, kPairWise, kListWise };

const char* objective_name(ObjectiveKind kind);
// Accepts "label", "pair", "list" (and the long forms).
ObjectiveKind parse_objective(const std::string& name);

// [Z_t - max_{i != t} Z_i]_+ over the logits (any shape holding K values).
// At ties the runner-up is the lowest competing index.
Var labelwise_loss(Var logits, int target);

// [alpha + d(f_j, f') - d(f_k, f')]_+ for one tuple.
Var pairwise_loss(Var anchor_adv, Var far_negative, Var near_positive, double alpha);
// Sum over a batch of tuples sharing the perturbed anchor.
Var pairwise_loss(Var anchor_adv, std::span<const Var> far_negatives, std::span<const Var> near_positives,
                  double alpha);

// Sum_i (2^y_i - 1) / log2(i + 1), positions from 1.
double dcg(std::span<const int> ratings);
// dcg / dcg(sorted descending). MetricError when every rating is 0.
double ndcg(std::span<const int> ratings);
// |ndcg after swapping positions a and b - ndcg before|, 0-based positions.
// Only the two affected terms are evaluated.
double delta_ndcg_swap(std::span<const int> ratings, std::size_t a, std::size_t b);
// -delta / (1 + exp(d_j - d_k)).
double lambda_weight(double d_j, double d_k, double delta);

struct ListwiseTerms {
  // Coefficient c_m of d(f', f_m) in the surrogate sum_m c_m d(f', f_m),
  // whose gradient is the NDCG ascent direction.
  std::vector<double> coefficients;
  std::vector<int> current_order;  // member positions by ascending distance
  double ndcg = 1.0;               // of the current order
  int violations = 0;              // disagreeing pairs
};

// Accumulates -lambda_jk over every pair (j before k, y_j < y_k) in the
// order induced by `distances`. Distance ties keep member order.
ListwiseTerms listwise_terms(std::span<const int> ratings, std::span<const double> distances);

// Gradient w.r.t. `wrt` of sum_m c_m d(query_adv, member_m): the direction
// that raises NDCG against `ratings`. Zero for fewer than two members.
// Clears any gradients already accumulated on the tape.
Tensor listwise_gradient(std::span<const int> ratings, Var query_adv, std::span<const Var> members, Var wrt,
                         ListwiseTerms* terms = nullptr);

}  // namespace uapr

#endif  // UAPR_OBJECTIVES_HPP_
