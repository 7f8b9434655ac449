#include "doctest.h"

#include <cmath>
#include <random>

#include "utd/data.hpp"
#include "utd/eval.hpp"
#include "utd/rng.hpp"

using namespace utd;

namespace {

double pair_count_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0.0;
    for (double p : pos) {
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Linearly separable data in 2-D: label by the sign of x0 + x1, with a margin.
void separable(std::size_t n, std::uint64_t seed, RealMatrix& x, std::vector<int>& y) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    x = RealMatrix(n, 2);
    y.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double a, b;
        do {
            a = u(rng);
            b = u(rng);
        } while (std::abs(a + b) < 0.3);
        x(i, 0) = a;
        x(i, 1) = b;
        y[i] = a + b > 0 ? 1 : 0;
    }
}

// Classic perceptron; returns the number of training mistakes after convergence.
std::size_t perceptron_errors(const RealMatrix& x, const std::vector<int>& y) {
    double w0 = 0, w1 = 0, b = 0;
    for (int epoch = 0; epoch < 1000; ++epoch) {
        std::size_t mistakes = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double t = y[i] ? 1.0 : -1.0;
            if (t * (w0 * x(i, 0) + w1 * x(i, 1) + b) <= 0) {
                w0 += t * x(i, 0);
                w1 += t * x(i, 1);
                b += t;
                ++mistakes;
            }
        }
        if (mistakes == 0) return 0;
    }
    return 1;
}

}  // namespace

TEST_CASE("auc equals exhaustive pair counting") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        std::uniform_int_distribution<int> size(1, 100);
        // coarse values force plenty of ties
        std::uniform_int_distribution<int> value(0, trial % 2 ? 5 : 1000);
        std::vector<double> pos(size(rng)), neg(size(rng));
        for (double& v : pos) v = value(rng) / 4.0;
        for (double& v : neg) v = value(rng) / 4.0;
        CHECK(auc(pos, neg) == pair_count_auc(pos, neg));
    }
}

TEST_CASE("auc edge cases") {
    const std::vector<double> hi{3, 4}, lo{1, 2};
    CHECK(auc(hi, lo) == 1.0);
    CHECK(auc(lo, hi) == 0.0);
    CHECK(auc(hi, hi) == 0.5);
    CHECK_THROWS_AS(auc(hi, std::vector<double>{}), InvalidArgument);
}

TEST_CASE("standard error fixture") {
    CHECK(std::abs(auc_standard_error(0.75, 2, 2) - 0.27629) < 1e-5);
}

TEST_CASE("standard error from the variance formula") {
    const double t = 0.8;
    const double q1 = t / (2 - t), q2 = 2 * t * t / (1 + t);
    const double var = (t * (1 - t) + 29 * (q1 - t * t) + 39 * (q2 - t * t)) / (30.0 * 40.0);
    CHECK(auc_standard_error(t, 30, 40) == doctest::Approx(std::sqrt(var)));
}

TEST_CASE("roc runs from origin to (1,1) and its area is the auc") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> v(0, 9);
    std::vector<double> pos(25), neg(30);
    for (double& x : pos) x = v(rng) + 1;
    for (double& x : neg) x = v(rng);
    const auto roc = roc_points(pos, neg);
    CHECK(roc.front().fpr == 0.0);
    CHECK(roc.front().tpr == 0.0);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
        CHECK(roc[i].fpr >= roc[i - 1].fpr);
        area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
    }
    CHECK(area == doctest::Approx(auc(pos, neg)));
}

TEST_CASE("auc from labels splits by class") {
    const std::vector<double> scores{0.9, 0.1, 0.8, 0.3};
    const std::vector<int> labels{1, 0, 0, 1};
    CHECK(auc_from_labels(scores, labels) == pair_count_auc({0.9, 0.3}, {0.1, 0.8}));
}

TEST_CASE("fine-tuning separates what a perceptron separates") {
    RealMatrix x, vx;
    std::vector<int> y, vy;
    separable(40, 1, x, y);
    separable(30, 2, vx, vy);
    REQUIRE(perceptron_errors(x, y) == 0);
    const std::vector<std::size_t> hidden{6};
    const Network init{init_encoder(2, hidden, 3, 1), init_head(3, 2, 2)};
    FineTuneConfig cfg;
    cfg.epochs = 300;
    cfg.learning_rate = 0.5;
    const FineTuneResult r = fine_tune(init, x, y, vx, vy, cfg);
    CHECK(r.val_history.size() == cfg.epochs + 1);
    CHECK(r.val_history[0] == doctest::Approx(auc_from_labels(positive_scores(init, vx), vy)));
    CHECK(auc_from_labels(positive_scores(r.model, x), y) == 1.0);
    CHECK(r.val_history[r.selected_epoch] == *std::max_element(r.val_history.begin(), r.val_history.end()));
    CHECK(auc_from_labels(positive_scores(r.model, vx), vy) == r.val_history[r.selected_epoch]);
}

TEST_CASE("model selection keeps the latest best epoch") {
    RealMatrix x, vx;
    std::vector<int> y, vy;
    separable(20, 3, x, y);
    separable(20, 4, vx, vy);
    const std::vector<std::size_t> hidden{4};
    const Network init{init_encoder(2, hidden, 2, 3), init_head(2, 2, 4)};
    FineTuneConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 0.3;
    const FineTuneResult r = fine_tune(init, x, y, vx, vy, cfg);
    for (std::size_t e = 0; e < r.val_history.size(); ++e) {
        CHECK(r.val_history[e] <= r.val_history[r.selected_epoch]);
        if (e > r.selected_epoch) CHECK(r.val_history[e] < r.val_history[r.selected_epoch]);
    }
    CHECK(fine_tune(init, x, y, vx, vy, cfg).val_history == r.val_history);
}

TEST_CASE("nearest neighbour picks the closest row, lowest index on ties") {
    const RealMatrix train = RealMatrix::from_rows({{0, 0}, {2, 0}, {0, 2}});
    const std::vector<int> labels{0, 1, 1};
    const std::vector<double> near_second{1.9, 0.1}, tie{1, 0};
    CHECK(nearest_neighbour_classify(train, labels, near_second) == 1.0);
    CHECK(nearest_neighbour_classify(train, labels, tie) == 0.0);
}

TEST_CASE("autoencoder reduces reconstruction loss") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    RealMatrix x(60, 6);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double a = g(rng), b = g(rng);
        for (std::size_t j = 0; j < 6; ++j) x(i, j) = (j % 2 ? a : b) * (1.0 + 0.1 * j);
    }
    AutoencoderConfig cfg;
    cfg.hidden = {8};
    cfg.feature_dim = 2;
    cfg.epochs = 60;
    cfg.learning_rate = 0.05;
    const AutoencoderResult r = pretrain_autoencoder(x, cfg);
    CHECK(r.loss_history.size() == 61);
    CHECK(r.loss_history.back() < 0.5 * r.loss_history.front());
    CHECK(r.encoder.feature_dim() == 2);
    CHECK(r.decoder.feature_dim() == 6);
}

TEST_CASE("aggregate averages seeds and recomputes the standard error") {
    PipelineConfig cfg;
    cfg.k = 4;
    const std::vector<std::uint64_t> seeds{1, 2};
    const std::vector<MethodResult> results{{0.8, 0.05, 30, 40}, {0.9, 0.04, 30, 40}};
    const EvalReport r = aggregate(Method::umt_finetune, cfg, seeds, results);
    CHECK(r.auc == doctest::Approx(0.85));
    CHECK(r.standard_error == doctest::Approx(auc_standard_error(0.85, 30, 40)));
    CHECK(r.k == 4);
    CHECK(r.strategy == "random");
    CHECK(aggregate(Method::from_scratch, cfg, seeds, results).k == 0);
}

TEST_CASE("report records round trip") {
    EvalReport r;
    r.method = "dc_finetune";
    r.k = 5;
    r.strategy = "-";
    r.auc = 0.1 + 0.2;
    r.standard_error = 1.0 / 3.0;
    r.n_pos = 10;
    r.n_neg = 12;
    r.seeds = {0, 1};
    r.seed_aucs = {0.3, 0.30000000000000004};
    r.seed_standard_errors = {0.01, 0.02};
    CHECK(report_from_json(report_to_json(r)) == r);
    CHECK_THROWS_AS(report_from_json("{\"method\": 1}"), IoError);
}

TEST_CASE("method names") {
    for (Method m : all_methods()) CHECK(parse_method(to_string(m)) == m);
    CHECK(all_methods().size() == 6);
    CHECK_THROWS_AS(parse_method("svm"), InvalidArgument);
}

TEST_CASE("auc fixtures and invariances") {
    CHECK(auc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}) == 1.0);
    CHECK(auc(std::vector<double>{0.5}, std::vector<double>{0.5}) == 0.5);
    CHECK(auc(std::vector<double>{0.6, 0.4}, std::vector<double>{0.5, 0.3}) == 0.75);

    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pos(13), neg(9);
        for (double& v : pos) v = g(rng) + 0.5;
        for (double& v : neg) v = g(rng);
        std::vector<double> tp, tn;
        for (double v : pos) tp.push_back(std::exp(3.0 * v) + 1.0);
        for (double v : neg) tn.push_back(std::exp(3.0 * v) + 1.0);
        CHECK(auc(tp, tn) == auc(pos, neg));
        CHECK(auc(pos, neg) + auc(neg, pos) == doctest::Approx(1.0));
    }
}

TEST_CASE("standard error boundaries") {
    CHECK(auc_standard_error(1.0, 20, 30) == 0.0);
    CHECK(auc_standard_error(0.5, 1, 1) == doctest::Approx(0.5));
    CHECK(auc_standard_error(0.0, 20, 30) == 0.0);
    CHECK(auc_standard_error(0.5, 10, 25) == doctest::Approx(auc_standard_error(0.5, 25, 10)));
    CHECK_THROWS_AS(auc_standard_error(1.5, 10, 10), InvalidArgument);
    CHECK_THROWS_AS(auc_standard_error(-0.1, 10, 10), InvalidArgument);
    CHECK_THROWS_AS(auc_standard_error(0.5, 0, 10), InvalidArgument);
}

TEST_CASE("fine-tuning edge cases") {
    RealMatrix x, vx;
    std::vector<int> y, vy;
    separable(30, 5, x, y);
    separable(20, 6, vx, vy);
    const std::vector<std::size_t> hidden{6};
    const Network init{init_encoder(2, hidden, 3, 5), init_head(3, 2, 6)};
    FineTuneConfig cfg;
    cfg.epochs = 0;
    const FineTuneResult none = fine_tune(init, x, y, vx, vy, cfg);
    CHECK(flatten(none.model) == flatten(init));
    CHECK(none.val_history.size() == 1);
    CHECK(none.selected_epoch == 0);

    cfg.epochs = 200;
    cfg.learning_rate = 0.5;
    const FineTuneResult trained = fine_tune(init, x, y, vx, vy, cfg);
    const auto scores = positive_scores(trained.model, x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) correct += (scores[i] > 0.5) == (y[i] == 1) ? 1 : 0;
    CHECK(correct == scores.size());
}

TEST_CASE("nearest neighbour fixtures") {
    const RealMatrix line = RealMatrix::from_rows({{0}, {10}});
    const std::vector<int> labels{0, 1};
    CHECK(nearest_neighbour_classify(line, labels, std::vector<double>{2}) == 0.0);
    CHECK(nearest_neighbour_classify(line, labels, std::vector<double>{9}) == 1.0);
    CHECK(nearest_neighbour_classify(line, labels, std::vector<double>{10}) == 1.0);
    CHECK_THROWS_AS(nearest_neighbour_classify(RealMatrix(0, 1), std::vector<int>{}, std::vector<double>{1}),
                    InvalidArgument);
}

TEST_CASE("autoencoder without epochs keeps its initialisation and is seeded") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    RealMatrix x(20, 4);
    for (double& v : x.values()) v = g(rng);
    AutoencoderConfig cfg;
    cfg.hidden = {5};
    cfg.feature_dim = 2;
    cfg.epochs = 0;
    cfg.seed = 12;
    const AutoencoderResult r = pretrain_autoencoder(x, cfg);
    CHECK(flatten(r.encoder) == flatten(init_encoder(4, cfg.hidden, 2, derive_seed(12, {1}))));
    CHECK(r.loss_history.size() == 1);
    cfg.epochs = 5;
    CHECK(pretrain_autoencoder(x, cfg).loss_history == pretrain_autoencoder(x, cfg).loss_history);
}

namespace {

Dataset two_far_blobs() {
    BlobConfig b;
    b.hidden_classes = 2;
    b.per_class = 40;
    b.d_in = 4;
    b.separation = 20.0;
    b.noise = 0.5;
    b.seed = 3;
    return split_groupwise(assign_downstream_labels(generate_blobs(b), {0}), {0.4, 0.2, 0.4}, 1);
}

PipelineConfig tiny_pipeline() {
    PipelineConfig cfg;
    cfg.hidden = {8};
    cfg.feature_dim = 4;
    cfg.k = 2;
    cfg.cluster_rounds = 1;
    cfg.cluster_epochs = 1;
    cfg.labelled_per_class = 5;
    cfg.finetune.epochs = 50;
    cfg.finetune.learning_rate = 0.1;
    cfg.seeds = {0};
    return cfg;
}

}  // namespace

TEST_CASE("training from scratch on a trivially separable task is perfect") {
    const EvalReport r = run_baseline(Method::from_scratch, two_far_blobs(), tiny_pipeline());
    CHECK(r.auc == 1.0);
    CHECK(r.standard_error == 0.0);
}

TEST_CASE("nearest neighbour on collapsed features scores one half") {
    const Dataset data = two_far_blobs();
    const PipelineConfig cfg = resolve(tiny_pipeline());
    SeedRun run(data, cfg, 0);
    ClusterModel collapsed;
    collapsed.k = 2;
    collapsed.theta = init_encoder(4, cfg.hidden, cfg.feature_dim, 1);
    for (auto& layer : collapsed.theta.layers) {
        layer.weight = RealMatrix(layer.weight.rows(), layer.weight.cols());
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    collapsed.omega = init_head(cfg.feature_dim, 2, 2);
    collapsed.pseudo_labels.assign(run.unlabelled_train().rows(), 0);
    collapsed.pseudo_labels[0] = 1;
    run.set_cluster_model(collapsed);
    CHECK(run.evaluate(Method::dc_nn).auc == 0.5);
}
