#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "utd/matrix.hpp"
#include "utd/nn.hpp"

namespace utd {

/// Cluster centres stored column-wise: matrix is (D x K).
struct Centroids {
    RealMatrix matrix;

    std::size_t dim() const noexcept { return matrix.rows(); }
    std::size_t count() const noexcept { return matrix.cols(); }
    std::vector<double> centroid(std::size_t k) const;
    friend bool operator==(const Centroids&, const Centroids&) = default;
};

/// Cluster index per sample, in [0, K).
using PseudoLabels = std::vector<int>;

struct KMeansResult {
    Centroids centroids;
    PseudoLabels labels;
    /// Mean squared distance of each point to its centroid.
    double objective = 0.0;
    /// Objective after each centroid update; non-increasing.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
};

inline constexpr std::size_t kMaxLloydIterations = 300;

/// Lloyd's algorithm with k-means++ seeding. Requires 2 <= K <= rows.
KMeansResult kmeans(const RealMatrix& features, std::size_t k, std::uint64_t seed);

/// Lloyd's algorithm from explicit starting centres (one per row of
/// `initial`, K x D). Any K >= 1 is accepted.
KMeansResult kmeans_from(const RealMatrix& features, const RealMatrix& initial);

/// Indices of the points picked by k-means++ seeding.
std::vector<std::size_t> kmeans_pp_seeds(const RealMatrix& features, std::size_t k,
                                         std::uint64_t seed);

/// Mean silhouette coefficient with l2 distances. Points alone in their
/// cluster score 0. Labels need not be contiguous but must name >= 2 clusters.
double silhouette(const RealMatrix& features, std::span<const int> labels);

struct DeepClusterConfig {
    std::vector<std::size_t> hidden{32};
    std::size_t feature_dim = 16;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t min_k = 2;
    std::size_t max_k = 10;
};

struct ClusterModel {
    EncoderParams theta;
    HeadParams omega;
    Centroids centroids;
    PseudoLabels pseudo_labels;
    double kappa = 0.0;
    std::size_t k = 0;
    /// Index of the round whose snapshot was selected, and the silhouette of every round.
    std::size_t selected_round = 0;
    std::vector<double> round_kappas;

    friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

/// Features the clustering stage sees: encoder output with unit-norm rows.
RealMatrix clustering_features(const EncoderParams& theta, const RealMatrix& data);

/// Alternates k-means on the current features with `epochs_per_round` epochs
/// of cross-entropy training against the resulting pseudo-labels, and keeps
/// the round with the highest silhouette.
ClusterModel deep_cluster(const RealMatrix& data, std::size_t k, std::size_t rounds,
                          std::size_t epochs_per_round, const DeepClusterConfig& config,
                          std::uint64_t seed);

}  // namespace utd
