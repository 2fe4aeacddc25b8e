#include "uapr/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "uapr/container.hpp"
#include "uapr/errors.hpp"
#include "uapr/random.hpp"

namespace uapr {

namespace {

using Rng = std::mt19937_64;

int uniform_index(Rng& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

// Nearest centroid per row; ties to the lowest centroid index.
double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, std::vector<int>& out) {
  double inertia = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < c.rows(); ++j) {
      const double d = (x.row(i) - c.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    inertia += best_d;
  }
  return inertia;
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& c) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c.rows(), c.rows());
  for (Index i = 0; i < c.rows(); ++i) {
    for (Index j = i + 1; j < c.rows(); ++j) d(i, j) = d(j, i) = (c.row(i) - c.row(j)).norm();
  }
  return d;
}

}  // namespace

std::vector<std::vector<int>> LandmarkModel::members() const {
  std::vector<std::vector<int>> m(static_cast<std::size_t>(k()));
  for (std::size_t i = 0; i < assignments.size(); ++i) m[static_cast<std::size_t>(assignments[i])].push_back(static_cast<int>(i));
  return m;
}

LandmarkModel kmeans_fit(std::span<const Descriptor> descriptors, int k, std::uint64_t seed, int max_iters) {
  if (k < 1) throw ConfigurationError("k-means needs k >= 1");
  if (max_iters < 1) throw ConfigurationError("k-means needs max_iters >= 1");
  if (descriptors.empty()) throw ConfigurationError("k-means over an empty descriptor set");
  const Index n = static_cast<Index>(descriptors.size());
  const Index dim = descriptors[0].vector.size();
  Eigen::MatrixXd x(n, dim);
  std::set<std::vector<double>> distinct;
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd& v = descriptors[static_cast<std::size_t>(i)].vector;
    if (v.size() != dim) throw DimensionError("k-means descriptors differ in dimension");
    x.row(i) = v.transpose();
    distinct.insert(std::vector<double>(v.data(), v.data() + v.size()));
  }
  if (static_cast<std::size_t>(k) > distinct.size()) {
    throw ConfigurationError("k-means with k = " + std::to_string(k) + " over " + std::to_string(distinct.size()) +
                             " distinct descriptors");
  }

  // k-means++ seeding.
  Rng rng = keyed_rng(seed, 0);
  Eigen::MatrixXd c(k, dim);
  c.row(0) = x.row(uniform_index(rng, static_cast<std::size_t>(n)));
  Eigen::VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    std::discrete_distribution<Index> pick(d2.data(), d2.data() + n);
    c.row(j) = x.row(pick(rng));
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }

  LandmarkModel lm;
  lm.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> next(static_cast<std::size_t>(n));
  double inertia = assign(x, c, next);
  for (int it = 0; it < max_iters; ++it) {
    lm.inertia_history.push_back(inertia);
    if (next == lm.assignments) break;
    lm.assignments = next;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(lm.assignments[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(lm.assignments[static_cast<std::size_t>(i)])];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        c.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
      } else {
        // Empty landmark: move it onto the point worst served by its centroid.
        Index worst = 0;
        double worst_d = -1.0;
        for (Index i = 0; i < n; ++i) {
          const double d = (x.row(i) - c.row(lm.assignments[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        c.row(j) = x.row(worst);
      }
    }
    inertia = assign(x, c, next);
  }
  lm.assignments = next;
  lm.centroids = c;
  lm.center_distances = pairwise_distances(c);
  return lm;
}

int farthest_cluster(const LandmarkModel& lm, int cluster) {
  if (cluster < 0 || cluster >= lm.k()) throw IndexError("landmark index " + std::to_string(cluster) + " out of range");
  Index best = 0;
  lm.center_distances.row(cluster).maxCoeff(&best);  // Eigen returns the first maximum
  return static_cast<int>(best);
}

TupleSet build_anchor_tuples(const LandmarkModel& lm, int anchor, int per_anchor, std::uint64_t seed) {
  if (anchor < 0 || static_cast<std::size_t>(anchor) >= lm.assignments.size()) {
    throw IndexError("anchor " + std::to_string(anchor) + " out of range");
  }
  TupleSet out;
  if (per_anchor <= 0) return out;
  const auto members = lm.members();
  const int own = lm.assignments[static_cast<std::size_t>(anchor)];
  std::vector<int> positives;
  for (int m : members[static_cast<std::size_t>(own)]) {
    if (m != anchor) positives.push_back(m);
  }
  const std::vector<int>& negatives = members[static_cast<std::size_t>(farthest_cluster(lm, own))];
  if (positives.empty() || negatives.empty() || lm.k() < 2) {
    out.skipped_anchors = 1;
    return out;
  }
  Rng rng = keyed_rng(seed, static_cast<std::uint64_t>(anchor) + 1);
  for (int t = 0; t < per_anchor; ++t) {
    const int k = positives[static_cast<std::size_t>(uniform_index(rng, positives.size()))];
    const int j = negatives[static_cast<std::size_t>(uniform_index(rng, negatives.size()))];
    out.tuples.push_back({anchor, j, k});
  }
  return out;
}

TupleSet build_tuples(const LandmarkModel& lm, int per_anchor, std::uint64_t seed) {
  TupleSet out;
  if (per_anchor <= 0) return out;
  for (std::size_t i = 0; i < lm.assignments.size(); ++i) {
    TupleSet one = build_anchor_tuples(lm, static_cast<int>(i), per_anchor, seed);
    out.tuples.insert(out.tuples.end(), one.tuples.begin(), one.tuples.end());
    out.skipped_anchors += one.skipped_anchors;
  }
  return out;
}

RankingSubset sample_ranking_subset(const LandmarkModel& lm, int query_index, std::uint64_t seed) {
  if (query_index < 0 || static_cast<std::size_t>(query_index) >= lm.assignments.size()) {
    throw IndexError("query " + std::to_string(query_index) + " out of range");
  }
  const int own = lm.assignments[static_cast<std::size_t>(query_index)];
  const int k = lm.k();
  std::vector<int> by_distance(static_cast<std::size_t>(k));
  std::iota(by_distance.begin(), by_distance.end(), 0);
  std::stable_sort(by_distance.begin(), by_distance.end(), [&](int a, int b) {
    if (a == own || b == own) return a == own && b != own;
    return lm.center_distances(own, a) < lm.center_distances(own, b);
  });
  std::vector<int> rating_of(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) rating_of[static_cast<std::size_t>(by_distance[static_cast<std::size_t>(r)])] = r + 1;

  RankingSubset s;
  s.query_index = query_index;
  const auto members = lm.members();
  Rng rng = keyed_rng(seed, static_cast<std::uint64_t>(query_index) + 1);
  for (int c = 0; c < k; ++c) {
    std::vector<int> pool;
    for (int m : members[static_cast<std::size_t>(c)]) {
      if (m != query_index) pool.push_back(m);
    }
    if (pool.empty()) {
      ++s.skipped_landmarks;
      continue;
    }
    s.member_indices.push_back(pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))]);
    s.member_landmarks.push_back(c);
    s.ratings.push_back(rating_of[static_cast<std::size_t>(c)]);
  }
  s.ideal_order.resize(s.member_indices.size());
  std::iota(s.ideal_order.begin(), s.ideal_order.end(), 0);
  std::stable_sort(s.ideal_order.begin(), s.ideal_order.end(), [&](int a, int b) {
    return s.ratings[static_cast<std::size_t>(a)] > s.ratings[static_cast<std::size_t>(b)];
  });
  return s;
}

void save_landmarks(const LandmarkModel& lm, const std::filesystem::path& path) {
  Container c;
  c.kind = "landmarks";
  c.header["k"] = lm.k();
  c.header["dim"] = lm.centroids.cols();
  c.header["inertia_history"] = lm.inertia_history;
  Tensor centroids(Shape{lm.centroids.rows(), lm.centroids.cols()});
  centroids.matrix(lm.centroids.rows(), lm.centroids.cols()) = lm.centroids;
  Tensor assignments(Shape{static_cast<Index>(std::max<std::size_t>(lm.assignments.size(), 1))});
  for (std::size_t i = 0; i < lm.assignments.size(); ++i) assignments[static_cast<Index>(i)] = lm.assignments[i];
  c.header["count"] = lm.assignments.size();
  c.blocks.emplace_back("centroids", centroids);
  c.blocks.emplace_back("assignments", assignments);
  write_container(path, c);
}

LandmarkModel load_landmarks(const std::filesystem::path& path) {
  const Container c = read_container(path, "landmarks");
  LandmarkModel lm;
  std::size_t count = 0;
  try {
    count = c.header.at("count").get<std::size_t>();
    lm.inertia_history = c.header.value("inertia_history", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": incomplete landmark header: " + e.what());
  }
  const Tensor& centroids = c.block("centroids");
  if (centroids.rank() != 2) throw FormatError(path.string() + ": centroids must be [k,D]");
  lm.centroids = centroids.matrix(centroids.dim(0), centroids.dim(1));
  const Tensor& assignments = c.block("assignments");
  if (static_cast<std::size_t>(assignments.size()) < count) throw FormatError(path.string() + ": assignment block too short");
  for (std::size_t i = 0; i < count; ++i) {
    const double a = assignments[static_cast<Index>(i)];
    if (a < 0 || a >= static_cast<double>(lm.k()) || a != std::floor(a)) {
      throw FormatError(path.string() + ": assignment out of range");
    }
    lm.assignments.push_back(static_cast<int>(a));
  }
  lm.center_distances = pairwise_distances(lm.centroids);
  return lm;
}

}  // namespace uapr
