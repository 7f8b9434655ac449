#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "utd/clustering.hpp"
#include "utd/nn.hpp"
#include "utd/tasks.hpp"

namespace utd {

enum class MetaMode { first_order, exact_fd };
enum class SamplingStrategy { random, curriculum };

std::string to_string(MetaMode mode);
std::string to_string(SamplingStrategy strategy);
MetaMode parse_meta_mode(const std::string& text);
SamplingStrategy parse_strategy(const std::string& text);

struct MetaConfig {
    double alpha = 0.001;
    double outer_lr = 0.001;
    std::size_t tasks_per_batch = 4;
    std::size_t iterations = 500;
    MetaMode mode = MetaMode::first_order;
    SamplingStrategy strategy = SamplingStrategy::random;
    std::size_t support_size = 4;
    std::size_t query_size = 16;
    std::uint64_t seed = 0;
    double curriculum_temperature = 0.1;
    double ema_decay = 0.9;
    /// Start the meta encoder from the clustering encoder instead of a fresh init.
    bool init_from_cluster = true;
    std::vector<std::size_t> hidden{32};
    std::size_t feature_dim = 16;
};

/// Throws InvalidArgument when a knob breaks its range. alpha = 0 is accepted
/// (adaptation becomes the identity).
void validate(const MetaConfig& config);

inline constexpr std::size_t kMaxExactFdParameters = 200;

// -- generic single-step MAML over flat parameters ---------------------------

/// Loss at `params`; writes the gradient into `grad` when it is non-null.
using FlatObjective = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

/// Negative log-likelihoods of one episode's support and query sets.
struct EpisodeObjective {
    FlatObjective support_nll;
    FlatObjective query_nll;
};

/// One gradient step on the support loss starting at psi.
std::vector<double> inner_adapt(std::span<const double> psi, const FlatObjective& support_nll,
                                double alpha);

/// Sum over episodes of the query log-likelihood after adaptation (<= 0 for
/// discrete labels).
double outer_objective(std::span<const double> psi, std::span<const EpisodeObjective> episodes,
                       double alpha);

struct MetaGradient {
    /// Gradient of the meta-loss (minus the outer objective) with respect to psi.
    std::vector<double> grad;
    double objective = 0.0;
    std::vector<std::vector<double>> adapted;
};

/// first_order uses the query gradient at the adapted point; exact_fd also
/// multiplies by the transpose of the inner step's Jacobian, taken by central
/// differences (at most kMaxExactFdParameters parameters).
MetaGradient meta_gradient(std::span<const double> psi, std::span<const EpisodeObjective> episodes,
                           double alpha, MetaMode mode, double fd_step = 1e-5);

/// psi - outer_lr * meta-gradient.
std::vector<double> meta_step(std::span<const double> psi, std::span<const EpisodeObjective> episodes,
                              const MetaConfig& config);

// -- network instantiation ---------------------------------------------------

/// Summed cross-entropy of the 2-output network on a labelled subset of `data`.
FlatObjective labelled_nll(const Network& shape, const RealMatrix& data,
                           std::span<const LabelledRef> refs);
EpisodeObjective episode_objective(const Network& shape, const RealMatrix& data, const Episode& episode);

Network inner_adapt(const Network& psi, const RealMatrix& data, std::span<const LabelledRef> support,
                    double alpha);
double outer_objective(const Network& psi, const RealMatrix& data, std::span<const Episode> episodes,
                       double alpha);
Network meta_step(const Network& psi, const RealMatrix& data, std::span<const Episode> episodes,
                  const MetaConfig& config);

/// Fraction of refs whose argmax prediction matches the label.
double accuracy(const Network& net, const RealMatrix& data, std::span<const LabelledRef> refs);

// -- task sampling -----------------------------------------------------------

/// Per-task running statistics for curriculum sampling.
struct TaskStats {
    std::vector<double> accuracy_ema;
    std::vector<double> progress_ema;
    std::vector<std::size_t> samples;

    explicit TaskStats(std::size_t tasks = 0)
        : accuracy_ema(tasks, 0.5), progress_ema(tasks, 0.5), samples(tasks, 0) {}

    std::size_t size() const noexcept { return accuracy_ema.size(); }
    /// Folds one query accuracy into task `index`'s averages.
    void record(std::size_t index, double accuracy, double decay);
};

/// Indices into `catalog.tasks`, drawn with replacement.
std::vector<std::size_t> sample_meta_batch(const TaskCatalog& catalog, const TaskStats& stats,
                                           SamplingStrategy strategy, std::size_t count,
                                           std::uint64_t seed, double temperature = 0.1);

/// Curriculum sampling probabilities: softmax of progress / temperature.
std::vector<double> curriculum_weights(const TaskStats& stats, double temperature);

// -- training loop -----------------------------------------------------------

struct IterationLog {
    std::size_t iteration = 0;
    double objective = 0.0;
    std::vector<std::size_t> tasks;
    std::vector<double> accuracies;
    friend bool operator==(const IterationLog&, const IterationLog&) = default;
};

struct MetaTrainingResult {
    Network psi;
    std::vector<IterationLog> log;
    /// Catalog restricted to tasks whose pool can fill an episode.
    TaskCatalog eligible;
    std::size_t excluded = 0;
    TaskStats stats;
};

/// Seeds used by the training loop, exposed so an independent driver can
/// replay exactly the same batches and episodes.
std::uint64_t meta_batch_seed(std::uint64_t seed, std::size_t iteration);
std::uint64_t episode_seed(std::uint64_t seed, std::size_t iteration, std::size_t slot);

/// Initial meta parameters: clustering encoder (or a fresh one) with a fresh 2-output head.
Network initial_meta_params(const ClusterModel& model, std::size_t input_dim, const MetaConfig& config);

/// Tasks of `catalog` whose materialized pool has both classes and at least
/// support + query members, with their pools.
struct EligibleTasks {
    TaskCatalog catalog;
    std::vector<TaskPool> pools;
    std::size_t excluded = 0;
};
EligibleTasks eligible_tasks(const TaskCatalog& catalog, const ClusterModel& model, std::size_t episode_size);

MetaTrainingResult run_meta_training(const RealMatrix& data, const ClusterModel& model,
                                     const TaskCatalog& catalog, const MetaConfig& config);

}  // namespace utd
