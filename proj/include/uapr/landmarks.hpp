#ifndef UAPR_LANDMARKS_HPP_
#define UAPR_LANDMARKS_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "uapr/model.hpp"

namespace uapr {

// K-means structure over clean descriptors. Row i of `centroids` is landmark
// i; `assignments[n]` is the pseudo-label of the n-th fitted descriptor.
struct LandmarkModel {
  Eigen::MatrixXd centroids;         // [k, D]
  std::vector<int> assignments;
  Eigen::MatrixXd center_distances;  // [k, k]
  std::vector<double> inertia_history;

  int k() const { return static_cast<int>(centroids.rows()); }
  std::vector<std::vector<int>> members() const;
};

// Lloyd iterations from a k-means++ start. Deterministic in `seed`.
LandmarkModel kmeans_fit(std::span<const Descriptor> descriptors, int k, std::uint64_t seed,
                         int max_iters = 100);

// Landmark whose centroid is farthest from `cluster`; ties to the lowest index.
int farthest_cluster(const LandmarkModel& lm, int cluster);

// (anchor i, far negative j, near positive k): i and k share a landmark,
// j lies in farthest_cluster(i).
struct RelationTuple {
  int anchor = 0;
  int far_negative = 0;
  int near_positive = 0;
  bool operator==(const RelationTuple&) const = default;
};

struct TupleSet {
  std::vector<RelationTuple> tuples;
  int skipped_anchors = 0;  // anchors alone in their landmark
};

TupleSet build_tuples(const LandmarkModel& lm, int per_anchor, std::uint64_t seed);
// Tuples for a single anchor.
TupleSet build_anchor_tuples(const LandmarkModel& lm, int anchor, int per_anchor, std::uint64_t seed);

// One reference per landmark with integer relevance ratings. The query's own
// landmark is rated 1 and the farthest landmark k, so the ideal order lists
// the far landmarks first.
struct RankingSubset {
  int query_index = 0;
  std::vector<int> member_indices;
  std::vector<int> member_landmarks;
  std::vector<int> ratings;
  std::vector<int> ideal_order;  // positions into member_indices
  int skipped_landmarks = 0;
};

RankingSubset sample_ranking_subset(const LandmarkModel& lm, int query_index, std::uint64_t seed);

void save_landmarks(const LandmarkModel& lm, const std::filesystem::path& path);
LandmarkModel load_landmarks(const std::filesystem::path& path);

}  // namespace uapr

#endif  // UAPR_LANDMARKS_HPP_
