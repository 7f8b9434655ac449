#include "utd/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "utd/rng.hpp"

namespace utd {
namespace {

// Nearest centre per point; ties go to the lowest index. Centres are rows (K x D).
PseudoLabels assign(const RealMatrix& features, const RealMatrix& centres) {
    PseudoLabels labels(features.rows(), 0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < centres.rows(); ++k) {
            const double d = squared_distance(features.row(i), centres.row(k));
            if (d < best) {
                best = d;
                labels[i] = static_cast<int>(k);
            }
        }
    }
    return labels;
}

// Gives every empty cluster the point of the currently largest cluster that
// lies farthest from that cluster's centre.
void repair_empty(const RealMatrix& features, const RealMatrix& centres, PseudoLabels& labels) {
    const std::size_t k = centres.rows();
    std::vector<std::size_t> counts(k, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t empty = 0; empty < k; ++empty) {
        if (counts[empty] != 0) continue;
        const std::size_t largest = static_cast<std::size_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < features.rows(); ++i) {
            if (static_cast<std::size_t>(labels[i]) != largest) continue;
            const double d = squared_distance(features.row(i), centres.row(largest));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        labels[far] = static_cast<int>(empty);
        --counts[largest];
        ++counts[empty];
    }
}

RealMatrix means(const RealMatrix& features, const PseudoLabels& labels, std::size_t k) {
    RealMatrix centres(k, features.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        auto dst = centres.row(c);
        auto src = features.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (double& v : centres.row(c)) v /= static_cast<double>(counts[c]);
    }
    return centres;
}

double mean_sq_error(const RealMatrix& features, const RealMatrix& centres, const PseudoLabels& labels) {
    if (features.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        total += squared_distance(features.row(i), centres.row(static_cast<std::size_t>(labels[i])));
    }
    return total / static_cast<double>(features.rows());
}

Centroids to_columns(const RealMatrix& centres) {
    RealMatrix m(centres.cols(), centres.rows());
    for (std::size_t k = 0; k < centres.rows(); ++k) {
        for (std::size_t d = 0; d < centres.cols(); ++d) m(d, k) = centres(k, d);
    }
    return Centroids{std::move(m)};
}

}  // namespace

std::vector<double> Centroids::centroid(std::size_t k) const {
    std::vector<double> c(dim());
    for (std::size_t d = 0; d < dim(); ++d) c[d] = matrix(d, k);
    return c;
}

std::vector<std::size_t> kmeans_pp_seeds(const RealMatrix& features, std::size_t k,
                                         std::uint64_t seed) {
    const std::size_t n = features.rows();
    if (k == 0 || k > n) throw InvalidArgument("k-means++ needs 1 <= K <= sample count");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    std::vector<bool> taken(n, false);
    chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    taken[chosen.back()] = true;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < k) {
        const auto last = features.row(chosen.back());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(features.row(i), last));
            if (!taken[i]) total += nearest[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || nearest[i] <= 0.0) continue;
                pick = i;
                target -= nearest[i];
                if (target < 0.0) break;
            }
        }
        if (pick == n) {
            // every remaining point coincides with a chosen one: pick uniformly among them
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i]) rest.push_back(i);
            }
            pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
        }
        chosen.push_back(pick);
        taken[pick] = true;
    }
    return chosen;
}

KMeansResult kmeans_from(const RealMatrix& features, const RealMatrix& initial) {
    const std::size_t k = initial.rows();
    if (k == 0 || k > features.rows()) throw InvalidArgument("K must be in [1, sample count]");
    if (initial.cols() != features.cols()) throw ShapeError("initial centres have wrong width");
    if (!features.all_finite()) throw InvalidArgument("k-means input has non-finite values");

    KMeansResult result;
    RealMatrix centres = initial;
    PseudoLabels labels = assign(features, centres);
    repair_empty(features, centres, labels);
    for (std::size_t iter = 1; iter <= kMaxLloydIterations; ++iter) {
        centres = means(features, labels, k);
        result.objective_history.push_back(mean_sq_error(features, centres, labels));
        result.iterations = iter;
        PseudoLabels next = assign(features, centres);
        repair_empty(features, centres, next);
        if (next == labels) break;
        labels = std::move(next);
    }
    result.objective = result.objective_history.back();
    result.centroids = to_columns(centres);
    result.labels = std::move(labels);
    return result;
}

KMeansResult kmeans(const RealMatrix& features, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("k-means needs K >= 2");
    if (k > features.rows()) {
        throw InvalidArgument("K = " + std::to_string(k) + " exceeds sample count " +
                              std::to_string(features.rows()));
    }
    const auto seeds = kmeans_pp_seeds(features, k, seed);
    return kmeans_from(features, features.select_rows(seeds));
}

double silhouette(const RealMatrix& features, std::span<const int> labels) {
    const std::size_t n = features.rows();
    if (labels.size() != n) throw ShapeError("silhouette: one label per sample required");
    if (n < 2) throw InvalidArgument("silhouette needs at least 2 samples");
    std::vector<int> ids(labels.begin(), labels.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw InvalidArgument("silhouette is undefined for a single cluster");

    std::vector<std::size_t> slot(n);
    std::vector<std::size_t> sizes(ids.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        slot[i] = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
        ++sizes[slot[i]];
    }

    double total = 0.0;
    std::vector<double> sums(ids.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[slot[i]] == 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[slot[j]] += distance(features.row(i), features.row(j));
        }
        const double a = sums[slot[i]] / static_cast<double>(sizes[slot[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < ids.size(); ++c) {
            if (c != slot[i]) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

RealMatrix clustering_features(const EncoderParams& theta, const RealMatrix& data) {
    return normalize_rows(forward_features(theta, data));
}

ClusterModel deep_cluster(const RealMatrix& data, std::size_t k, std::size_t rounds,
                          std::size_t epochs_per_round, const DeepClusterConfig& config,
                          std::uint64_t seed) {
    if (k < config.min_k || k > config.max_k) {
        throw InvalidArgument("K = " + std::to_string(k) + " outside the configured range [" +
                              std::to_string(config.min_k) + ", " + std::to_string(config.max_k) + "]");
    }
    if (rounds == 0) throw InvalidArgument("deep clustering needs at least one round");
    if (config.batch_size == 0) throw InvalidArgument("batch size must be positive");

    Network net;
    net.encoder = init_encoder(data.cols(), config.hidden, config.feature_dim,
                               derive_seed(seed, {1}));
    ClusterModel best;
    bool have_best = false;
    std::vector<double> round_kappas;
    std::vector<std::size_t> order(data.rows());

    for (std::size_t round = 0; round < rounds; ++round) {
        KMeansResult km = kmeans(clustering_features(net.encoder, data), k,
                                 derive_seed(seed, {2, round}));
        net.head = init_head(config.feature_dim, k, derive_seed(seed, {3, round}));
        const RealMatrix targets = one_hot(km.labels, k);

        std::mt19937_64 rng(derive_seed(seed, {4, round}));
        for (std::size_t epoch = 0; epoch < epochs_per_round; ++epoch) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t stop = std::min(order.size(), start + config.batch_size);
                std::span<const std::size_t> idx(order.data() + start, stop - start);
                ClassificationLoss step =
                    classification_loss(net, data.select_rows(idx), targets.select_rows(idx));
                if (!std::isfinite(step.loss)) {
                    throw DivergedError("deep clustering loss became non-finite in round " +
                                        std::to_string(round));
                }
                net = sgd_step(net, step.grad, config.learning_rate);
            }
        }

        const double kappa = silhouette(clustering_features(net.encoder, data), km.labels);
        round_kappas.push_back(kappa);
        if (!have_best || kappa > best.kappa) {
            best.theta = net.encoder;
            best.omega = net.head;
            best.centroids = km.centroids;
            best.pseudo_labels = km.labels;
            best.kappa = kappa;
            best.k = k;
            best.selected_round = round;
            have_best = true;
        }
    }
    best.round_kappas = std::move(round_kappas);
    return best;
}

}  // namespace utd
