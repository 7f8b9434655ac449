#include "utd/meta.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "utd/rng.hpp"

namespace utd {
namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string to_string(MetaMode mode) {
    return mode == MetaMode::first_order ? "first_order" : "exact_fd";
}

std::string to_string(SamplingStrategy strategy) {
    return strategy == SamplingStrategy::random ? "random" : "curriculum";
}

MetaMode parse_meta_mode(const std::string& text) {
    if (text == "first_order") return MetaMode::first_order;
    if (text == "exact_fd") return MetaMode::exact_fd;
    throw InvalidArgument("unknown meta mode '" + text + "'");
}

SamplingStrategy parse_strategy(const std::string& text) {
    if (text == "random") return SamplingStrategy::random;
    if (text == "curriculum") return SamplingStrategy::curriculum;
    throw InvalidArgument("unknown sampling strategy '" + text + "'");
}

void validate(const MetaConfig& config) {
    if (!(config.alpha >= 0.0) || !std::isfinite(config.alpha)) throw InvalidArgument("alpha must be >= 0");
    if (!(config.outer_lr > 0.0) || !std::isfinite(config.outer_lr)) throw InvalidArgument("outer_lr must be > 0");
    if (config.tasks_per_batch < 1) throw InvalidArgument("T must be >= 1");
    if (config.support_size < 2) throw InvalidArgument("support size must be >= 2");
    if (config.support_size >= config.query_size) throw InvalidArgument("support size must be below query size");
    if (!(config.curriculum_temperature > 0.0)) throw InvalidArgument("curriculum temperature must be > 0");
    if (!(config.ema_decay >= 0.0 && config.ema_decay < 1.0)) throw InvalidArgument("EMA decay must be in [0, 1)");
    if (config.feature_dim == 0) throw InvalidArgument("feature dimension must be positive");
}

std::vector<double> inner_adapt(std::span<const double> psi, const FlatObjective& support_nll,
                                double alpha) {
    if (alpha < 0.0) throw InvalidArgument("alpha must be >= 0");
    std::vector<double> grad;
    support_nll(psi, &grad);
    if (grad.size() != psi.size()) throw ShapeError("support gradient does not match parameters");
    if (!all_finite(grad)) throw DivergedError("non-finite support gradient in inner adaptation");
    std::vector<double> phi(psi.begin(), psi.end());
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= alpha * grad[i];
    return phi;
}

double outer_objective(std::span<const double> psi, std::span<const EpisodeObjective> episodes,
                       double alpha) {
    if (episodes.empty()) throw InvalidArgument("outer objective needs at least one episode");
    double total = 0.0;
    for (const auto& episode : episodes) {
        const auto phi = inner_adapt(psi, episode.support_nll, alpha);
        total -= episode.query_nll(phi, nullptr);
    }
    return total;
}

MetaGradient meta_gradient(std::span<const double> psi, std::span<const EpisodeObjective> episodes,
                           double alpha, MetaMode mode, double fd_step) {
    if (episodes.empty()) throw InvalidArgument("meta-gradient needs at least one episode");
    if (mode == MetaMode::exact_fd && psi.size() > kMaxExactFdParameters) {
        throw CapabilityError("exact_fd mode supports at most " + std::to_string(kMaxExactFdParameters) +
                              " parameters, model has " + std::to_string(psi.size()));
    }
    MetaGradient out;
    out.grad.assign(psi.size(), 0.0);
    std::vector<double> query_grad;
    std::vector<double> shifted(psi.begin(), psi.end());
    for (const auto& episode : episodes) {
        auto phi = inner_adapt(psi, episode.support_nll, alpha);
        out.objective -= episode.query_nll(phi, &query_grad);
        if (query_grad.size() != psi.size()) throw ShapeError("query gradient does not match parameters");
        if (mode == MetaMode::first_order) {
            for (std::size_t i = 0; i < psi.size(); ++i) out.grad[i] += query_grad[i];
        } else {
            // column j of d(phi)/d(psi) by central differences, contracted with the query gradient
            for (std::size_t j = 0; j < psi.size(); ++j) {
                shifted[j] = psi[j] + fd_step;
                const auto up = inner_adapt(shifted, episode.support_nll, alpha);
                shifted[j] = psi[j] - fd_step;
                const auto down = inner_adapt(shifted, episode.support_nll, alpha);
                shifted[j] = psi[j];
                double acc = 0.0;
                for (std::size_t i = 0; i < psi.size(); ++i) {
                    acc += query_grad[i] * (up[i] - down[i]) / (2.0 * fd_step);
                }
                out.grad[j] += acc;
            }
        }
        out.adapted.push_back(std::move(phi));
    }
    if (!std::isfinite(out.objective) || !all_finite(out.grad)) {
        throw DivergedError("non-finite meta-objective or meta-gradient");
    }
    return out;
}

std::vector<double> meta_step(std::span<const double> psi, std::span<const EpisodeObjective> episodes,
                              const MetaConfig& config) {
    if (episodes.size() != config.tasks_per_batch) {
        throw InvalidArgument("meta step expects " + std::to_string(config.tasks_per_batch) +
                              " episodes, got " + std::to_string(episodes.size()));
    }
    const MetaGradient mg = meta_gradient(psi, episodes, config.alpha, config.mode);
    std::vector<double> next(psi.begin(), psi.end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= config.outer_lr * mg.grad[i];
    return next;
}

FlatObjective labelled_nll(const Network& shape, const RealMatrix& data,
                           std::span<const LabelledRef> refs) {
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (const auto& r : refs) {
        rows.push_back(r.sample);
        labels.push_back(r.label);
    }
    RealMatrix batch = data.select_rows(rows);
    RealMatrix targets = one_hot(labels, shape.head.num_classes());
    const double count = static_cast<double>(refs.size());
    return [shape, batch = std::move(batch), targets = std::move(targets), count](
               std::span<const double> params, std::vector<double>* grad) {
        const Network net = unflatten(shape, params);
        if (!grad) return count * cross_entropy(predict_proba(net, batch), targets).loss;
        ClassificationLoss cl = classification_loss(net, batch, targets);
        *grad = flatten(cl.grad);
        for (double& g : *grad) g *= count;
        return count * cl.loss;
    };
}

EpisodeObjective episode_objective(const Network& shape, const RealMatrix& data, const Episode& episode) {
    return {labelled_nll(shape, data, episode.support), labelled_nll(shape, data, episode.query)};
}

Network inner_adapt(const Network& psi, const RealMatrix& data, std::span<const LabelledRef> support,
                    double alpha) {
    const auto flat = flatten(psi);
    return unflatten(psi, inner_adapt(flat, labelled_nll(psi, data, support), alpha));
}

namespace {
std::vector<EpisodeObjective> objectives(const Network& psi, const RealMatrix& data,
                                         std::span<const Episode> episodes) {
    std::vector<EpisodeObjective> out;
    out.reserve(episodes.size());
    for (const auto& e : episodes) out.push_back(episode_objective(psi, data, e));
    return out;
}
}  // namespace

double outer_objective(const Network& psi, const RealMatrix& data, std::span<const Episode> episodes,
                       double alpha) {
    return outer_objective(flatten(psi), objectives(psi, data, episodes), alpha);
}

Network meta_step(const Network& psi, const RealMatrix& data, std::span<const Episode> episodes,
                  const MetaConfig& config) {
    return unflatten(psi, meta_step(flatten(psi), objectives(psi, data, episodes), config));
}

double accuracy(const Network& net, const RealMatrix& data, std::span<const LabelledRef> refs) {
    if (refs.empty()) return 0.0;
    std::vector<std::size_t> rows;
    for (const auto& r : refs) rows.push_back(r.sample);
    const RealMatrix probs = predict_proba(net, data.select_rows(rows));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        auto row = probs.row(i);
        const int predicted = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (predicted == refs[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(refs.size());
}

void TaskStats::record(std::size_t index, double acc, double decay) {
    const double before = accuracy_ema.at(index);
    const double after = decay * before + (1.0 - decay) * acc;
    accuracy_ema[index] = after;
    progress_ema[index] = decay * progress_ema[index] + (1.0 - decay) * std::abs(after - before);
    ++samples[index];
}

std::vector<double> curriculum_weights(const TaskStats& stats, double temperature) {
    if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
    std::vector<double> w(stats.size());
    if (w.empty()) return w;
    const double top = *std::max_element(stats.progress_ema.begin(), stats.progress_ema.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp((stats.progress_ema[i] - top) / temperature);
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

std::vector<std::size_t> sample_meta_batch(const TaskCatalog& catalog, const TaskStats& stats,
                                           SamplingStrategy strategy, std::size_t count,
                                           std::uint64_t seed, double temperature) {
    if (catalog.tasks.empty()) throw InvalidArgument("no eligible tasks to sample from");
    if (count < 1) throw InvalidArgument("meta-batch size must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> batch(count);
    if (strategy == SamplingStrategy::random) {
        std::uniform_int_distribution<std::size_t> pick(0, catalog.tasks.size() - 1);
        for (auto& b : batch) b = pick(rng);
        return batch;
    }
    if (stats.size() != catalog.tasks.size()) throw InvalidArgument("task statistics do not match the catalog");
    const auto weights = curriculum_weights(stats, temperature);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    for (auto& b : batch) b = pick(rng);
    return batch;
}

std::uint64_t meta_batch_seed(std::uint64_t seed, std::size_t iteration) {
    return derive_seed(seed, {20, iteration});
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t iteration, std::size_t slot) {
    return derive_seed(seed, {21, iteration, slot});
}

Network initial_meta_params(const ClusterModel& model, std::size_t input_dim, const MetaConfig& config) {
    Network psi;
    if (config.init_from_cluster) {
        psi.encoder = model.theta;
    } else {
        psi.encoder = init_encoder(input_dim, config.hidden, config.feature_dim, derive_seed(config.seed, {22}));
    }
    psi.head = init_head(psi.encoder.feature_dim(), 2, derive_seed(config.seed, {23}));
    return psi;
}

EligibleTasks eligible_tasks(const TaskCatalog& catalog, const ClusterModel& model, std::size_t episode_size) {
    EligibleTasks out;
    out.catalog.k = catalog.k;
    for (const auto& task : catalog.tasks) {
        try {
            TaskPool pool = materialize_task(task, model);
            if (pool.members.size() < episode_size) {
                ++out.excluded;
                continue;
            }
            out.catalog.tasks.push_back(task);
            out.pools.push_back(std::move(pool));
        } catch (const EmptyClassError&) {
            ++out.excluded;
        }
    }
    return out;
}

MetaTrainingResult run_meta_training(const RealMatrix& data, const ClusterModel& model,
                                     const TaskCatalog& catalog, const MetaConfig& config) {
    validate(config);
    if (model.pseudo_labels.size() != data.rows()) {
        throw InvalidArgument("cluster model does not cover the training data");
    }
    EligibleTasks eligible = eligible_tasks(catalog, model, config.support_size + config.query_size);
    if (eligible.catalog.tasks.empty()) throw InvalidArgument("no task can fill an episode");

    MetaTrainingResult result;
    result.psi = initial_meta_params(model, data.cols(), config);
    result.stats = TaskStats(eligible.catalog.tasks.size());
    result.excluded = eligible.excluded;

    std::vector<Episode> episodes(config.tasks_per_batch);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        IterationLog entry;
        entry.iteration = it;
        entry.tasks = sample_meta_batch(eligible.catalog, result.stats, config.strategy,
                                        config.tasks_per_batch, meta_batch_seed(config.seed, it),
                                        config.curriculum_temperature);
        std::vector<EpisodeObjective> objs;
        for (std::size_t slot = 0; slot < entry.tasks.size(); ++slot) {
            episodes[slot] = sample_episode(eligible.pools[entry.tasks[slot]], config.support_size,
                                            config.query_size, episode_seed(config.seed, it, slot));
            objs.push_back(episode_objective(result.psi, data, episodes[slot]));
        }
        const auto psi_flat = flatten(result.psi);
        const MetaGradient mg = meta_gradient(psi_flat, objs, config.alpha, config.mode);
        entry.objective = mg.objective;
        for (std::size_t slot = 0; slot < entry.tasks.size(); ++slot) {
            const double acc = accuracy(unflatten(result.psi, mg.adapted[slot]), data, episodes[slot].query);
            entry.accuracies.push_back(acc);
            result.stats.record(entry.tasks[slot], acc, config.ema_decay);
        }
        std::vector<double> next = psi_flat;
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= config.outer_lr * mg.grad[i];
        result.psi = unflatten(result.psi, next);
        result.log.push_back(std::move(entry));
    }
    result.eligible = std::move(eligible.catalog);
    return result;
}

}  // namespace utd
