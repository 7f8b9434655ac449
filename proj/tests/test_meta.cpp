#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "utd/meta.hpp"
#include "utd/tasks.hpp"

using namespace utd;

namespace {

FlatObjective quadratic(double centre) {
    return [centre](std::span<const double> p, std::vector<double>* g) {
        if (g) *g = {p[0] - centre};
        return 0.5 * (p[0] - centre) * (p[0] - centre);
    };
}

// s(x) = x^3 / 3, so the inner step is x - alpha x^2
FlatObjective cubic() {
    return [](std::span<const double> p, std::vector<double>* g) {
        if (g) *g = {p[0] * p[0]};
        return p[0] * p[0] * p[0] / 3.0;
    };
}

RealMatrix two_blobs(std::size_t per, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.6);
    RealMatrix x(3 * per, 2);
    for (std::size_t i = 0; i < 3 * per; ++i) {
        x(i, 0) = static_cast<double>(i / per) * 3.0 + g(rng);
        x(i, 1) = (i / per == 1 ? 2.0 : 0.0) + g(rng);
    }
    return x;
}

ClusterModel fake_cluster_model(const RealMatrix& x, std::size_t per) {
    ClusterModel m;
    m.k = 3;
    const std::vector<std::size_t> hidden{4};
    m.theta = init_encoder(x.cols(), hidden, 3, 77);
    m.omega = init_head(3, 3, 78);
    for (std::size_t i = 0; i < x.rows(); ++i) m.pseudo_labels.push_back(static_cast<int>(i / per));
    return m;
}

}  // namespace

TEST_CASE("quadratic fixture meta-gradients") {
    const std::vector<EpisodeObjective> episodes{{quadratic(2.0), quadratic(4.0)}};
    const std::vector<double> psi{0.0};
    const MetaGradient fo = meta_gradient(psi, episodes, 0.1, MetaMode::first_order);
    const MetaGradient ex = meta_gradient(psi, episodes, 0.1, MetaMode::exact_fd);
    CHECK(std::abs(fo.grad[0] - (-3.8)) < 1e-8);
    CHECK(std::abs(ex.grad[0] - (-3.42)) < 1e-8);
    CHECK(fo.adapted[0][0] == doctest::Approx(0.2));
    CHECK(fo.objective == doctest::Approx(-0.5 * 3.8 * 3.8));
    CHECK(outer_objective(psi, episodes, 0.1) == doctest::Approx(fo.objective));
}

TEST_CASE("cubic fixture carries the inner Jacobian") {
    const std::vector<EpisodeObjective> episodes{{cubic(), quadratic(1.0)}};
    const double psi = 0.5, alpha = 0.1;
    const double phi = psi - alpha * psi * psi;
    const double expected = (phi - 1.0) * (1.0 - 2.0 * alpha * psi);
    const std::vector<double> p{psi};
    CHECK(meta_gradient(p, episodes, alpha, MetaMode::exact_fd).grad[0] == doctest::Approx(expected).epsilon(1e-8));
    CHECK(meta_gradient(p, episodes, alpha, MetaMode::first_order).grad[0] == doctest::Approx(phi - 1.0));
}

TEST_CASE("two-dimensional quadratic: exact gradient is (I - alpha A)^T q'") {
    // support 0.5 x^T A x with A = [[2, 1], [1, 3]]; query 0.5 |x - c|^2
    const FlatObjective support = [](std::span<const double> p, std::vector<double>* g) {
        const double g0 = 2 * p[0] + p[1], g1 = p[0] + 3 * p[1];
        if (g) *g = {g0, g1};
        return 0.5 * (p[0] * g0 + p[1] * g1);
    };
    const FlatObjective query = [](std::span<const double> p, std::vector<double>* g) {
        if (g) *g = {p[0] - 1.0, p[1] + 2.0};
        return 0.5 * ((p[0] - 1) * (p[0] - 1) + (p[1] + 2) * (p[1] + 2));
    };
    const std::vector<EpisodeObjective> episodes{{support, query}, {support, query}};
    const std::vector<double> psi{0.3, -0.7};
    const double a = 0.05;
    const double phi0 = psi[0] - a * (2 * psi[0] + psi[1]);
    const double phi1 = psi[1] - a * (psi[0] + 3 * psi[1]);
    const double q0 = phi0 - 1.0, q1 = phi1 + 2.0;
    const double e0 = 2 * ((1 - 2 * a) * q0 - a * q1);
    const double e1 = 2 * (-a * q0 + (1 - 3 * a) * q1);
    const MetaGradient g = meta_gradient(psi, episodes, a, MetaMode::exact_fd);
    CHECK(g.grad[0] == doctest::Approx(e0).epsilon(1e-8));
    CHECK(g.grad[1] == doctest::Approx(e1).epsilon(1e-8));
}

TEST_CASE("with alpha zero both modes reduce to the query gradient") {
    const std::vector<EpisodeObjective> episodes{{cubic(), quadratic(3.0)}};
    const std::vector<double> psi{1.5};
    const MetaGradient fo = meta_gradient(psi, episodes, 0.0, MetaMode::first_order);
    const MetaGradient ex = meta_gradient(psi, episodes, 0.0, MetaMode::exact_fd);
    CHECK(fo.grad[0] == doctest::Approx(-1.5));
    CHECK(ex.grad[0] == doctest::Approx(-1.5).epsilon(1e-9));
    CHECK(fo.adapted[0] == psi);
}

TEST_CASE("exact mode matches finite differences of the outer objective on a tiny net") {
    const RealMatrix x = two_blobs(6, 3);
    const ClusterModel model = fake_cluster_model(x, 6);
    const TaskPool pool = materialize_task(make_task({0}, {1, 2}), model);
    const std::vector<std::size_t> hidden{3};
    const Network net{init_encoder(2, hidden, 2, 5), init_head(2, 2, 6)};
    std::vector<EpisodeObjective> episodes;
    for (std::uint64_t s = 0; s < 2; ++s) episodes.push_back(episode_objective(net, x, sample_episode(pool, 4, 8, s)));

    const double alpha = 0.05, h = 1e-5;
    const std::vector<double> psi = flatten(net);
    const MetaGradient g = meta_gradient(psi, episodes, alpha, MetaMode::exact_fd);
    double worst = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        auto plus = psi, minus = psi;
        plus[i] += h;
        minus[i] -= h;
        // meta-loss is minus the objective
        const double numeric = -(outer_objective(plus, episodes, alpha) - outer_objective(minus, episodes, alpha)) / (2 * h);
        worst = std::max(worst, relative_error(g.grad[i], numeric));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("exact mode refuses large parameter vectors") {
    const std::vector<double> psi(kMaxExactFdParameters + 1, 0.0);
    const FlatObjective zero = [](std::span<const double> p, std::vector<double>* g) {
        if (g) g->assign(p.size(), 0.0);
        return 0.0;
    };
    const std::vector<EpisodeObjective> episodes{{zero, zero}};
    CHECK_THROWS_AS(meta_gradient(psi, episodes, 0.1, MetaMode::exact_fd), CapabilityError);
    CHECK_NOTHROW(meta_gradient(psi, episodes, 0.1, MetaMode::first_order));
}

TEST_CASE("summed support loss scales the inner step") {
    const RealMatrix x = two_blobs(5, 1);
    const std::vector<std::size_t> hidden{3};
    const Network net{init_encoder(2, hidden, 2, 1), init_head(2, 2, 2)};
    std::vector<LabelledRef> refs{{0, 0}, {6, 1}, {11, 1}};
    std::vector<double> grad;
    const double total = labelled_nll(net, x, refs)(flatten(net), &grad);
    double sum = 0.0;
    std::vector<double> sum_grad(grad.size(), 0.0);
    for (const auto& r : refs) {
        std::vector<double> g;
        const std::vector<LabelledRef> one{r};
        sum += labelled_nll(net, x, one)(flatten(net), &g);
        for (std::size_t i = 0; i < g.size(); ++i) sum_grad[i] += g[i];
    }
    CHECK(total == doctest::Approx(sum));
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == doctest::Approx(sum_grad[i]));
}

TEST_CASE("meta step moves against the meta-gradient") {
    const std::vector<EpisodeObjective> episodes{{quadratic(2.0), quadratic(4.0)}};
    MetaConfig cfg;
    cfg.alpha = 0.1;
    cfg.outer_lr = 0.5;
    cfg.tasks_per_batch = 1;
    const std::vector<double> psi{0.0};
    CHECK(meta_step(psi, episodes, cfg)[0] == doctest::Approx(0.5 * 3.8));
    const std::vector<EpisodeObjective> two{episodes[0], episodes[0]};
    CHECK_THROWS_AS(meta_step(psi, two, cfg), InvalidArgument);
}

TEST_CASE("task statistics follow their recurrences") {
    TaskStats s(2);
    s.record(1, 1.0, 0.9);
    CHECK(s.accuracy_ema[1] == doctest::Approx(0.55));
    CHECK(s.progress_ema[1] == doctest::Approx(0.9 * 0.5 + 0.1 * 0.05));
    CHECK(s.samples[1] == 1);
    CHECK(s.accuracy_ema[0] == 0.5);
}

TEST_CASE("curriculum weights are a softmax of progress") {
    TaskStats s(3);
    s.progress_ema = {0.1, 0.2, 0.4};
    const auto w = curriculum_weights(s, 0.1);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(4.0);
    CHECK(w[0] == doctest::Approx(std::exp(1.0) / z));
    CHECK(w[2] == doctest::Approx(std::exp(4.0) / z));
}

TEST_CASE("random task sampling is uniform (chi-square)") {
    const TaskCatalog catalog = enumerate_tasks(4);
    const TaskStats stats(catalog.tasks.size());
    std::vector<double> counts(catalog.tasks.size(), 0.0);
    const std::size_t draws = 25000;
    for (std::size_t i : sample_meta_batch(catalog, stats, SamplingStrategy::random, draws, 12)) counts[i] += 1;
    const double expected = static_cast<double>(draws) / counts.size();
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 24 degrees of freedom; 51.18 is the 0.001 critical value
    CHECK(chi2 < 51.18);
}

TEST_CASE("curriculum frequencies track their weights within three sigma") {
    const TaskCatalog catalog = enumerate_tasks(3);
    TaskStats stats(catalog.tasks.size());
    stats.progress_ema = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
    const auto w = curriculum_weights(stats, 0.1);
    const std::size_t draws = 20000;
    std::vector<double> counts(w.size(), 0.0);
    for (std::size_t i : sample_meta_batch(catalog, stats, SamplingStrategy::curriculum, draws, 4, 0.1)) counts[i] += 1;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double mean = draws * w[i];
        const double sigma = std::sqrt(draws * w[i] * (1 - w[i]));
        CHECK(std::abs(counts[i] - mean) <= 3 * sigma);
    }
}

TEST_CASE("meta-training is deterministic and logs every iteration") {
    const RealMatrix x = two_blobs(12, 9);
    const ClusterModel model = fake_cluster_model(x, 12);
    MetaConfig cfg;
    cfg.alpha = 0.05;
    cfg.outer_lr = 0.01;
    cfg.iterations = 15;
    cfg.support_size = 4;
    cfg.query_size = 8;
    cfg.hidden = {4};
    cfg.feature_dim = 3;
    cfg.seed = 3;
    const MetaTrainingResult a = run_meta_training(x, model, enumerate_tasks(3), cfg);
    const MetaTrainingResult b = run_meta_training(x, model, enumerate_tasks(3), cfg);
    CHECK(a.log.size() == 15);
    CHECK(a.log == b.log);
    CHECK(flatten(a.psi) == flatten(b.psi));
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].iteration == i);
        CHECK(a.log[i].tasks.size() == cfg.tasks_per_batch);
        CHECK(a.log[i].objective <= 0.0);
    }

    cfg.strategy = SamplingStrategy::curriculum;
    const MetaTrainingResult c = run_meta_training(x, model, enumerate_tasks(3), cfg);
    CHECK(c.log.size() == 15);
}

TEST_CASE("zero iterations return the initialisation") {
    const RealMatrix x = two_blobs(10, 2);
    const ClusterModel model = fake_cluster_model(x, 10);
    MetaConfig cfg;
    cfg.iterations = 0;
    cfg.support_size = 4;
    cfg.query_size = 8;
    cfg.seed = 8;
    cfg.init_from_cluster = true;
    const MetaTrainingResult r = run_meta_training(x, model, enumerate_tasks(3), cfg);
    CHECK(r.log.empty());
    CHECK(flatten(r.psi) == flatten(initial_meta_params(model, 2, cfg)));
    CHECK(r.psi.encoder.layers[0].weight == model.theta.layers[0].weight);
}

TEST_CASE("tasks that cannot fill an episode are excluded") {
    const RealMatrix x = two_blobs(4, 2);
    const ClusterModel model = fake_cluster_model(x, 4);
    const EligibleTasks e = eligible_tasks(enumerate_tasks(3), model, 9);
    // single clusters hold 4, pairs 8, all three 12
    CHECK(e.catalog.tasks.size() == 3);
    CHECK(e.excluded == 3);
}

TEST_CASE("meta config validation") {
    MetaConfig cfg;
    cfg.support_size = 16;
    cfg.query_size = 16;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = MetaConfig{};
    cfg.alpha = -1;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = MetaConfig{};
    cfg.tasks_per_batch = 0;
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    CHECK(parse_strategy("curriculum") == SamplingStrategy::curriculum);
    CHECK(parse_meta_mode("exact_fd") == MetaMode::exact_fd);
    CHECK_THROWS_AS(parse_strategy("greedy"), InvalidArgument);
}

TEST_CASE("two inner steps are not one step with double the rate") {
    const std::vector<double> psi{0.5};
    const FlatObjective s = cubic();
    const std::vector<double> once = inner_adapt(psi, s, 0.1);
    const std::vector<double> twice = inner_adapt(once, s, 0.1);
    const std::vector<double> doubled = inner_adapt(psi, s, 0.2);
    CHECK(once[0] == doctest::Approx(0.475));
    CHECK(twice[0] == doctest::Approx(0.4524375));
    CHECK(doubled[0] == doctest::Approx(0.45));
    CHECK(std::abs(twice[0] - doubled[0]) > 1e-3);
}

TEST_CASE("quadratic exact gradient to 1e-10 and a non-positive objective") {
    const std::vector<EpisodeObjective> episodes{{quadratic(2.0), quadratic(4.0)}};
    const std::vector<double> psi{0.0};
    CHECK(std::abs(meta_gradient(psi, episodes, 0.1, MetaMode::exact_fd).grad[0] - (-3.42)) < 1e-10);

    const RealMatrix x = two_blobs(10, 5);
    const ClusterModel model = fake_cluster_model(x, 10);
    const Network net{model.theta, init_head(3, 2, 1)};
    const Episode e = sample_episode(materialize_task(make_task({0}, {1, 2}), model), 4, 8, 2);
    const std::vector<Episode> es{e};
    CHECK(outer_objective(net, x, es, 0.05) <= 0.0);
}

TEST_CASE("with alpha zero the loop is plain joint training on query sets") {
    const RealMatrix x = two_blobs(12, 4);
    const ClusterModel model = fake_cluster_model(x, 12);
    MetaConfig cfg;
    cfg.alpha = 0.0;
    cfg.outer_lr = 0.02;
    cfg.iterations = 10;
    cfg.support_size = 4;
    cfg.query_size = 8;
    cfg.hidden = {4};
    cfg.feature_dim = 3;
    cfg.seed = 6;
    const TaskCatalog catalog = enumerate_tasks(3);
    const MetaTrainingResult r = run_meta_training(x, model, catalog, cfg);

    // independent driver: summed cross-entropy on each query set, gradient by backprop
    const EligibleTasks el = eligible_tasks(catalog, model, cfg.support_size + cfg.query_size);
    Network psi = initial_meta_params(model, x.cols(), cfg);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto tasks = sample_meta_batch(el.catalog, TaskStats(el.catalog.tasks.size()), SamplingStrategy::random,
                                             cfg.tasks_per_batch, meta_batch_seed(cfg.seed, it));
        REQUIRE(tasks == r.log[it].tasks);
        std::vector<double> grad(flatten(psi).size(), 0.0);
        double objective = 0.0;
        for (std::size_t slot = 0; slot < tasks.size(); ++slot) {
            const Episode e = sample_episode(el.pools[tasks[slot]], cfg.support_size, cfg.query_size,
                                             episode_seed(cfg.seed, it, slot));
            std::vector<std::size_t> rows;
            for (const auto& q : e.query) rows.push_back(q.sample);
            const RealMatrix batch = x.select_rows(rows);
            const RealMatrix p = forward_head(psi.head, forward_features(psi.encoder, batch));
            RealMatrix upstream = p;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto y = static_cast<std::size_t>(e.query[i].label);
                objective += std::log(p(i, y));
                upstream(i, y) -= 1.0;
            }
            const auto g = flatten(backward(psi.encoder, psi.head, batch, upstream));
            for (std::size_t j = 0; j < g.size(); ++j) grad[j] += g[j];
        }
        CHECK(r.log[it].objective == doctest::Approx(objective).epsilon(1e-9));
        std::vector<double> flat = flatten(psi);
        for (std::size_t j = 0; j < flat.size(); ++j) flat[j] -= cfg.outer_lr * grad[j];
        psi = unflatten(psi, flat);
    }
    const auto got = flatten(r.psi), want = flatten(psi);
    REQUIRE(got.size() == want.size());
    for (std::size_t j = 0; j < got.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-9));
}

TEST_CASE("meta-training on separable clusters raises post-adaptation accuracy") {
    const std::size_t per = 30, k = 5;
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    RealMatrix x(per * k, 4);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < 4; ++j) x(i, j) = (j == (i / per) % 4 ? 3.0 : 0.0) + (i / per == 4 ? -3.0 : 0.0) + g(rng);
    ClusterModel model;
    model.k = k;
    const std::vector<std::size_t> hidden{16};
    model.theta = init_encoder(4, hidden, 8, 1);
    model.omega = init_head(8, k, 2);
    for (std::size_t i = 0; i < x.rows(); ++i) model.pseudo_labels.push_back(static_cast<int>(i / per));
    MetaConfig cfg;
    cfg.alpha = 0.05;
    cfg.outer_lr = 0.003;
    cfg.iterations = 500;
    cfg.hidden = hidden;
    cfg.feature_dim = 8;
    cfg.init_from_cluster = false;
    cfg.seed = 4;
    const MetaTrainingResult r = run_meta_training(x, model, enumerate_tasks(k), cfg);
    auto window_mean = [&](std::size_t from) {
        double s = 0.0, n = 0.0;
        for (std::size_t i = from; i < from + 50; ++i)
            for (double a : r.log[i].accuracies) s += a, n += 1;
        return s / n;
    };
    const double first = window_mean(0), last = window_mean(450);
    CHECK(last > first);
}
