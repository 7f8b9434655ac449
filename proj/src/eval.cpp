#include "utd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"
#include "utd/rng.hpp"

namespace utd {

double auc(std::span<const double> scores_pos, std::span<const double> scores_neg) {
    if (scores_pos.empty() || scores_neg.empty()) throw InvalidArgument("AUC needs positive and negative scores");
    std::vector<double> neg(scores_neg.begin(), scores_neg.end());
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : scores_pos) {
        const auto lower = std::lower_bound(neg.begin(), neg.end(), p);
        const auto upper = std::upper_bound(lower, neg.end(), p);
        wins += static_cast<double>(lower - neg.begin()) + 0.5 * static_cast<double>(upper - lower);
    }
    return wins / (static_cast<double>(scores_pos.size()) * static_cast<double>(scores_neg.size()));
}

double auc_standard_error(double theta, std::size_t n_pos, std::size_t n_neg) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidArgument("AUC must lie in [0, 1]");
    if (n_pos < 1 || n_neg < 1) throw InvalidArgument("class counts must be >= 1");
    const double q1 = theta / (2.0 - theta);
    const double q2 = 2.0 * theta * theta / (1.0 + theta);
    const double t2 = theta * theta;
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    const double var = (theta * (1.0 - theta) + (np - 1.0) * (q1 - t2) + (nn - 1.0) * (q2 - t2)) / (np * nn);
    return std::sqrt(std::max(var, 0.0));
}

std::vector<RocPoint> roc_points(std::span<const double> scores_pos, std::span<const double> scores_neg) {
    if (scores_pos.empty() || scores_neg.empty()) throw InvalidArgument("ROC needs positive and negative scores");
    std::vector<std::pair<double, int>> all;
    for (double s : scores_pos) all.emplace_back(s, 1);
    for (double s : scores_neg) all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<RocPoint> points{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < all.size();) {
        const double threshold = all[i].first;
        for (; i < all.size() && all[i].first == threshold; ++i) (all[i].second ? tp : fp) += 1;
        points.push_back({static_cast<double>(fp) / static_cast<double>(scores_neg.size()),
                          static_cast<double>(tp) / static_cast<double>(scores_pos.size())});
    }
    return points;
}

double auc_from_labels(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("one label per score required");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
    return auc(pos, neg);
}

std::vector<double> positive_scores(const Network& net, const RealMatrix& batch) {
    if (net.head.num_classes() != 2) throw ShapeError("binary scores need a 2-output head");
    const RealMatrix probs = predict_proba(net, batch);
    std::vector<double> scores(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) scores[i] = probs(i, 1);
    return scores;
}

namespace {

void require_both_classes(std::span<const int> labels, const char* what) {
    const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!pos || !neg) throw InvalidArgument(std::string(what) + " set must contain both classes");
}

}  // namespace

FineTuneResult fine_tune(const Network& init, const RealMatrix& train_x, std::span<const int> train_y,
                         const RealMatrix& val_x, std::span<const int> val_y, const FineTuneConfig& config) {
    require_both_classes(train_y, "training");
    require_both_classes(val_y, "validation");
    if (!(config.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");

    Network net = init;
    if (config.reset_head) net.head = init_head(net.encoder.feature_dim(), 2, derive_seed(config.seed, {1}));
    const RealMatrix targets = one_hot(train_y, 2);

    FineTuneResult result;
    result.model = net;
    result.val_history.push_back(auc_from_labels(positive_scores(net, val_x), val_y));
    double best = result.val_history.front();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        ClassificationLoss step = classification_loss(net, train_x, targets);
        if (!std::isfinite(step.loss)) throw DivergedError("fine-tuning loss became non-finite");
        net = sgd_step(net, step.grad, config.learning_rate);
        const double val_auc = auc_from_labels(positive_scores(net, val_x), val_y);
        result.val_history.push_back(val_auc);
        if (val_auc >= best) {
            best = val_auc;
            result.model = net;
            result.selected_epoch = epoch;
        }
    }
    return result;
}

double nearest_neighbour_classify(const RealMatrix& train_features, std::span<const int> train_labels,
                                  std::span<const double> test_feature) {
    if (train_features.rows() == 0) throw InvalidArgument("nearest neighbour needs a nonempty training set");
    if (train_labels.size() != train_features.rows()) throw ShapeError("one label per training row required");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_features.rows(); ++i) {
        const double d = squared_distance(train_features.row(i), test_feature);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return static_cast<double>(train_labels[best]);
}

AutoencoderResult pretrain_autoencoder(const RealMatrix& data, const AutoencoderConfig& config) {
    if (data.rows() == 0) throw InvalidArgument("autoencoder needs data");
    if (config.batch_size == 0) throw InvalidArgument("batch size must be positive");
    AutoencoderResult result;
    result.encoder = init_encoder(data.cols(), config.hidden, config.feature_dim, derive_seed(config.seed, {1}));
    std::vector<std::size_t> mirrored(config.hidden.rbegin(), config.hidden.rend());
    result.decoder = init_encoder(config.feature_dim, mirrored, data.cols(), derive_seed(config.seed, {2}));

    auto full_loss = [&] {
        return reconstruction_loss(forward_features(result.decoder, forward_features(result.encoder, data)), data).loss;
    };
    result.loss_history.push_back(full_loss());

    std::mt19937_64 rng(derive_seed(config.seed, {3}));
    std::vector<std::size_t> order(data.rows());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            const RealMatrix batch = data.select_rows(idx);
            const RealMatrix code = forward_features(result.encoder, batch);
            LossResult mse = reconstruction_loss(forward_features(result.decoder, code), batch);
            if (!std::isfinite(mse.loss)) throw DivergedError("autoencoder loss became non-finite");
            RealMatrix grad_code;
            EncoderParams dec_grad = backward_encoder(result.decoder, code, mse.grad, &grad_code);
            EncoderParams enc_grad = backward_encoder(result.encoder, batch, grad_code);
            result.decoder = sgd_step(result.decoder, dec_grad, config.learning_rate);
            result.encoder = sgd_step(result.encoder, enc_grad, config.learning_rate);
        }
        const double loss = full_loss();
        if (!std::isfinite(loss)) throw DivergedError("autoencoder loss became non-finite");
        result.loss_history.push_back(loss);
    }
    return result;
}

std::string to_string(Method method) {
    switch (method) {
        case Method::from_scratch: return "from_scratch";
        case Method::ae_nn: return "ae_nn";
        case Method::ae_finetune: return "ae_finetune";
        case Method::dc_nn: return "dc_nn";
        case Method::dc_finetune: return "dc_finetune";
        case Method::umt_finetune: return "umt_finetune";
    }
    return "unknown";
}

Method parse_method(const std::string& text) {
    for (Method m : all_methods()) {
        if (to_string(m) == text) return m;
    }
    throw InvalidArgument("unknown method '" + text + "'");
}

std::vector<Method> all_methods() {
    return {Method::from_scratch, Method::ae_nn, Method::ae_finetune,
            Method::dc_nn, Method::dc_finetune, Method::umt_finetune};
}

PipelineConfig resolve(PipelineConfig config) {
    if (config.feature_dim == 0) throw InvalidArgument("feature_dim must be positive");
    for (auto h : config.hidden) {
        if (h == 0) throw InvalidArgument("hidden widths must be positive");
    }
    if (config.seeds.empty()) throw InvalidArgument("at least one seed is required");
    if (config.labelled_per_class < 1) throw InvalidArgument("labelled_per_class must be >= 1");
    if (config.cluster_rounds < 1) throw InvalidArgument("cluster_rounds must be >= 1");
    if (config.k < config.cluster.min_k || config.k > config.cluster.max_k) {
        throw InvalidArgument("K = " + std::to_string(config.k) + " outside the allowed range");
    }
    config.cluster.hidden = config.hidden;
    config.cluster.feature_dim = config.feature_dim;
    config.meta.hidden = config.hidden;
    config.meta.feature_dim = config.feature_dim;
    config.autoencoder.hidden = config.hidden;
    config.autoencoder.feature_dim = config.feature_dim;
    validate(config.meta);
    return config;
}

SeedRun::SeedRun(const Dataset& dataset, const PipelineConfig& config, std::uint64_t seed)
    : dataset_(&dataset), config_(resolve(config)), seed_(seed) {
    const LabelledView train = labelled_view(dataset, Split::train);
    unlabelled_ = train.features;
    val_ = labelled_view(dataset, Split::val);
    test_ = labelled_view(dataset, Split::test);
    require_both_classes(val_.labels, "validation");
    require_both_classes(test_.labels, "test");

    // few-shot labelled subset: labelled_per_class of each class from the train split
    std::mt19937_64 rng(derive_seed(seed, {100}));
    std::vector<std::size_t> chosen;
    for (int label : {0, 1}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < train.labels.size(); ++i) {
            if (train.labels[i] == label) rows.push_back(i);
        }
        if (rows.size() < config_.labelled_per_class) {
            throw InvalidArgument("train split has only " + std::to_string(rows.size()) + " samples of class " +
                                  std::to_string(label));
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        chosen.insert(chosen.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(config_.labelled_per_class));
    }
    std::sort(chosen.begin(), chosen.end());
    labelled_.features = train.features.select_rows(chosen);
    for (std::size_t r : chosen) {
        labelled_.labels.push_back(train.labels[r]);
        labelled_.sample_index.push_back(train.sample_index[r]);
    }
}

const ClusterModel& SeedRun::cluster_model() {
    if (!cluster_) {
        cluster_ = deep_cluster(unlabelled_, config_.k, config_.cluster_rounds, config_.cluster_epochs,
                                config_.cluster, derive_seed(seed_, {101}));
    }
    return *cluster_;
}

const AutoencoderResult& SeedRun::autoencoder() {
    if (!autoencoder_) {
        AutoencoderConfig ae = config_.autoencoder;
        ae.seed = derive_seed(seed_, {102});
        autoencoder_ = pretrain_autoencoder(unlabelled_, ae);
    }
    return *autoencoder_;
}

const MetaTrainingResult& SeedRun::meta_training() {
    if (!meta_) {
        MetaConfig meta = config_.meta;
        meta.seed = derive_seed(seed_, {103});
        const ClusterModel& model = cluster_model();
        meta_ = run_meta_training(unlabelled_, model, enumerate_tasks(model.k), meta);
    }
    return *meta_;
}

void SeedRun::set_cluster_model(ClusterModel model) {
    cluster_ = std::move(model);
    meta_.reset();
}

void SeedRun::set_autoencoder(AutoencoderResult result) { autoencoder_ = std::move(result); }

FineTuneResult SeedRun::fine_tune_from(const Network& init) const {
    FineTuneConfig ft = config_.finetune;
    ft.seed = derive_seed(seed_, {104});
    return fine_tune(init, labelled_.features, labelled_.labels, val_.features, val_.labels, ft);
}

MethodResult SeedRun::score_network(const Network& net) const {
    const double a = auc_from_labels(positive_scores(net, test_.features), test_.labels);
    MethodResult r;
    r.auc = a;
    r.n_pos = static_cast<std::size_t>(std::count(test_.labels.begin(), test_.labels.end(), 1));
    r.n_neg = test_.labels.size() - r.n_pos;
    r.standard_error = auc_standard_error(a, r.n_pos, r.n_neg);
    return r;
}

MethodResult SeedRun::score_nearest_neighbour(const EncoderParams& encoder) const {
    const RealMatrix train_f = forward_features(encoder, labelled_.features);
    const RealMatrix test_f = forward_features(encoder, test_.features);
    std::vector<double> scores(test_f.rows());
    for (std::size_t i = 0; i < test_f.rows(); ++i) {
        scores[i] = nearest_neighbour_classify(train_f, labelled_.labels, test_f.row(i));
    }
    MethodResult r;
    r.auc = auc_from_labels(scores, test_.labels);
    r.n_pos = static_cast<std::size_t>(std::count(test_.labels.begin(), test_.labels.end(), 1));
    r.n_neg = test_.labels.size() - r.n_pos;
    r.standard_error = auc_standard_error(r.auc, r.n_pos, r.n_neg);
    return r;
}

MethodResult SeedRun::evaluate(Method method) {
    const std::uint64_t head_seed = derive_seed(seed_, {105});
    switch (method) {
        case Method::from_scratch: {
            Network net;
            net.encoder = init_encoder(unlabelled_.cols(), config_.hidden, config_.feature_dim,
                                       derive_seed(seed_, {106}));
            net.head = init_head(config_.feature_dim, 2, head_seed);
            return score_network(fine_tune_from(net).model);
        }
        case Method::ae_nn:
            return score_nearest_neighbour(autoencoder().encoder);
        case Method::ae_finetune: {
            Network net{autoencoder().encoder, init_head(config_.feature_dim, 2, head_seed)};
            return score_network(fine_tune_from(net).model);
        }
        case Method::dc_nn:
            return score_nearest_neighbour(cluster_model().theta);
        case Method::dc_finetune: {
            Network net{cluster_model().theta, init_head(config_.feature_dim, 2, head_seed)};
            return score_network(fine_tune_from(net).model);
        }
        case Method::umt_finetune:
            return score_network(fine_tune_from(meta_training().psi).model);
    }
    throw InvalidArgument("unknown method");
}

EvalReport aggregate(Method method, const PipelineConfig& config, std::span<const std::uint64_t> seeds,
                     std::span<const MethodResult> results) {
    if (results.empty() || results.size() != seeds.size()) throw InvalidArgument("one result per seed required");
    EvalReport report;
    report.method = to_string(method);
    const bool clustered = method == Method::dc_nn || method == Method::dc_finetune || method == Method::umt_finetune;
    report.k = clustered ? config.k : 0;
    report.strategy = method == Method::umt_finetune ? to_string(config.meta.strategy) : "-";
    report.seeds.assign(seeds.begin(), seeds.end());
    double sum = 0.0;
    for (const auto& r : results) {
        report.seed_aucs.push_back(r.auc);
        report.seed_standard_errors.push_back(r.standard_error);
        sum += r.auc;
    }
    report.auc = sum / static_cast<double>(results.size());
    report.n_pos = results.front().n_pos;
    report.n_neg = results.front().n_neg;
    report.standard_error = auc_standard_error(report.auc, report.n_pos, report.n_neg);
    return report;
}

std::vector<EvalReport> run_baselines(std::span<const Method> methods, const Dataset& dataset,
                                      const PipelineConfig& config) {
    const PipelineConfig resolved = resolve(config);
    std::vector<std::vector<MethodResult>> per_method(methods.size());
    for (std::uint64_t seed : resolved.seeds) {
        SeedRun run(dataset, resolved, seed);
        for (std::size_t m = 0; m < methods.size(); ++m) per_method[m].push_back(run.evaluate(methods[m]));
    }
    std::vector<EvalReport> reports;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        reports.push_back(aggregate(methods[m], resolved, resolved.seeds, per_method[m]));
    }
    return reports;
}

EvalReport run_baseline(Method method, const Dataset& dataset, const PipelineConfig& config) {
    const Method one[] = {method};
    return run_baselines(one, dataset, config).front();
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["k"] = r.k;
    j["strategy"] = r.strategy;
    j["auc"] = r.auc;
    j["se"] = r.standard_error;
    j["n_pos"] = r.n_pos;
    j["n_neg"] = r.n_neg;
    j["seeds"] = r.seeds;
    j["seed_aucs"] = r.seed_aucs;
    j["seed_ses"] = r.seed_standard_errors;
    return j.dump();
}

EvalReport report_from_json(const std::string& line) {
    EvalReport r;
    try {
        const auto j = nlohmann::json::parse(line);
        r.method = j.at("method").get<std::string>();
        r.k = j.at("k").get<std::size_t>();
        r.strategy = j.at("strategy").get<std::string>();
        r.auc = j.at("auc").get<double>();
        r.standard_error = j.at("se").get<double>();
        r.n_pos = j.at("n_pos").get<std::size_t>();
        r.n_neg = j.at("n_neg").get<std::size_t>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        r.seed_aucs = j.at("seed_aucs").get<std::vector<double>>();
        r.seed_standard_errors = j.at("seed_ses").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad report record: ") + e.what());
    }
    return r;
}

}  // namespace utd
