#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "utd/clustering.hpp"
#include "utd/data.hpp"
#include "utd/meta.hpp"
#include "utd/nn.hpp"

namespace utd {

// -- metrics -----------------------------------------------------------------

/// Mann-Whitney estimate of the area under the ROC curve: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
double auc(std::span<const double> scores_pos, std::span<const double> scores_neg);

/// Hanley-McNeil standard error of an AUC estimate.
double auc_standard_error(double theta, std::size_t n_pos, std::size_t n_neg);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};
/// ROC vertices from (0,0) to (1,1), one per distinct score threshold.
std::vector<RocPoint> roc_points(std::span<const double> scores_pos, std::span<const double> scores_neg);

/// AUC of `scores` against binary `labels`.
double auc_from_labels(std::span<const double> scores, std::span<const int> labels);

// -- downstream training -----------------------------------------------------

struct FineTuneConfig {
    std::size_t epochs = 100;
    double learning_rate = 0.05;
    /// Replace the incoming head by a fresh 2-output head before training.
    bool reset_head = false;
    std::uint64_t seed = 0;
};

struct FineTuneResult {
    Network model;
    /// Validation AUC of the starting point, then after each epoch.
    std::vector<double> val_history;
    std::size_t selected_epoch = 0;
};

/// Full-batch gradient descent on the binary cross-entropy; keeps the epoch
/// with the best validation AUC (latest on ties).
FineTuneResult fine_tune(const Network& init, const RealMatrix& train_x, std::span<const int> train_y,
                         const RealMatrix& val_x, std::span<const int> val_y, const FineTuneConfig& config);

/// Probability of class 1 for every row.
std::vector<double> positive_scores(const Network& net, const RealMatrix& batch);

/// Label of the l2-nearest training row (lowest index on ties), as a score.
double nearest_neighbour_classify(const RealMatrix& train_features, std::span<const int> train_labels,
                                  std::span<const double> test_feature);

struct AutoencoderConfig {
    std::vector<std::size_t> hidden{32};
    std::size_t feature_dim = 16;
    std::size_t epochs = 100;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct AutoencoderResult {
    EncoderParams encoder;
    EncoderParams decoder;
    /// Reconstruction loss on the whole set before training, then after each epoch.
    std::vector<double> loss_history;
};

/// Encoder plus mirrored decoder trained on mean squared reconstruction error.
AutoencoderResult pretrain_autoencoder(const RealMatrix& data, const AutoencoderConfig& config);

// -- baseline pipelines ------------------------------------------------------

enum class Method { from_scratch, ae_nn, ae_finetune, dc_nn, dc_finetune, umt_finetune };

std::string to_string(Method method);
Method parse_method(const std::string& text);
std::vector<Method> all_methods();

struct PipelineConfig {
    std::vector<std::size_t> hidden{32};
    std::size_t feature_dim = 16;
    std::size_t k = 5;
    std::size_t cluster_rounds = 10;
    std::size_t cluster_epochs = 5;
    DeepClusterConfig cluster;
    MetaConfig meta;
    FineTuneConfig finetune;
    AutoencoderConfig autoencoder;
    /// Labelled downstream training samples drawn per class from the train split.
    std::size_t labelled_per_class = 10;
    std::vector<std::uint64_t> seeds{0};
};

/// Copies the shared architecture and K into the per-stage configs and
/// validates every knob. Throws InvalidArgument.
PipelineConfig resolve(PipelineConfig config);

struct MethodResult {
    double auc = 0.0;
    double standard_error = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

/// One seed of the downstream experiment. Pretrained models are computed on
/// first use and shared between methods; any of them can be injected.
class SeedRun {
public:
    SeedRun(const Dataset& dataset, const PipelineConfig& config, std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    const LabelledView& labelled_train() const noexcept { return labelled_; }
    const LabelledView& validation() const noexcept { return val_; }
    const LabelledView& test() const noexcept { return test_; }
    const RealMatrix& unlabelled_train() const noexcept { return unlabelled_; }

    const ClusterModel& cluster_model();
    const AutoencoderResult& autoencoder();
    const MetaTrainingResult& meta_training();

    void set_cluster_model(ClusterModel model);
    void set_autoencoder(AutoencoderResult result);

    MethodResult evaluate(Method method);
    FineTuneResult fine_tune_from(const Network& init) const;

private:
    MethodResult score_network(const Network& net) const;
    MethodResult score_nearest_neighbour(const EncoderParams& encoder) const;

    const Dataset* dataset_;
    PipelineConfig config_;
    std::uint64_t seed_;
    RealMatrix unlabelled_;
    LabelledView labelled_;
    LabelledView val_;
    LabelledView test_;
    std::optional<ClusterModel> cluster_;
    std::optional<AutoencoderResult> autoencoder_;
    std::optional<MetaTrainingResult> meta_;
};

struct EvalReport {
    std::string method;
    std::size_t k = 0;
    std::string strategy;
    double auc = 0.0;
    double standard_error = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> seed_aucs;
    std::vector<double> seed_standard_errors;
    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Mean AUC over the per-seed results; the SE is the Hanley-McNeil value at
/// the mean AUC for the test-set class counts.
EvalReport aggregate(Method method, const PipelineConfig& config, std::span<const std::uint64_t> seeds,
                     std::span<const MethodResult> results);

EvalReport run_baseline(Method method, const Dataset& dataset, const PipelineConfig& config);

/// Several methods over the same seeds, sharing pretrained models per seed.
std::vector<EvalReport> run_baselines(std::span<const Method> methods, const Dataset& dataset,
                                      const PipelineConfig& config);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& line);

}  // namespace utd
