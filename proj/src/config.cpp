#include "utd/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "utd/io.hpp"

namespace utd {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const std::string t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw InvalidArgument(key + ": cannot parse '" + text + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) throw InvalidArgument(key + ": value must be finite");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw InvalidArgument(key + ": expected true or false, got '" + text + "'");
}

template <typename T>
std::vector<T> parse_number_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) out.push_back(parse_number<T>(key, item));
    return out;
}

template <typename T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& show) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + show(items[i]);
    return out;
}

std::string join_numbers(const auto& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(items[i])>>) {
            out += format_real(items[i]);
        } else {
            out += std::to_string(items[i]);
        }
    }
    return out;
}

struct KeyHandler {
    ConfigKey key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define UTD_SIZE(name, field, doc)                                                                        \
    KeyHandler{{name, doc}, [](ExperimentConfig& c, const std::string& v) { c.field = parse_number<std::size_t>(name, v); }, \
               [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define UTD_U64(name, field, doc)                                                                         \
    KeyHandler{{name, doc}, [](ExperimentConfig& c, const std::string& v) { c.field = parse_number<std::uint64_t>(name, v); }, \
               [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define UTD_REAL(name, field, doc)                                                                        \
    KeyHandler{{name, doc}, [](ExperimentConfig& c, const std::string& v) { c.field = parse_number<double>(name, v); }, \
               [](const ExperimentConfig& c) { return format_real(c.field); }}
#define UTD_BOOL(name, field, doc)                                                                        \
    KeyHandler{{name, doc}, [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
               [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define UTD_PATH(name, field, doc)                                                                        \
    KeyHandler{{name, doc}, [](ExperimentConfig& c, const std::string& v) { c.field = trim(v); },          \
               [](const ExperimentConfig& c) { return c.field.string(); }}

const std::vector<KeyHandler>& handlers() {
    static const std::vector<KeyHandler> table = {
        KeyHandler{{"profile", "smoke or desk; in a config file it picks the base defaults unless --profile is given"},
                   [](ExperimentConfig& c, const std::string& v) { c.profile = parse_profile(trim(v)); },
                   [](const ExperimentConfig& c) { return to_string(c.profile); }},
        UTD_U64("seed", seed, "base seed; evaluation uses seed .. seed+seed_count-1"),
        UTD_SIZE("seed_count", seed_count, "number of seeds averaged by evaluate and benchmark"),
        UTD_SIZE("jobs", jobs, "concurrent evaluation cells"),

        UTD_SIZE("hidden_classes", blobs.hidden_classes, "latent classes of the synthetic data"),
        UTD_SIZE("per_class", blobs.per_class, "samples per latent class"),
        UTD_SIZE("d_in", blobs.d_in, "input dimension"),
        UTD_REAL("separation", blobs.separation, "distance between class means"),
        UTD_REAL("noise", blobs.noise, "isotropic noise standard deviation"),
        UTD_U64("data_seed", blobs.seed, "seed of the synthetic data"),
        KeyHandler{{"positive_classes", "latent classes forming the positive downstream label"},
                   [](ExperimentConfig& c, const std::string& v) {
                       c.positive_classes = parse_number_list<int>("positive_classes", v);
                   },
                   [](const ExperimentConfig& c) { return join_numbers(c.positive_classes); }},
        KeyHandler{{"split_fractions", "train,val,test fractions of the groups"},
                   [](ExperimentConfig& c, const std::string& v) {
                       auto f = parse_number_list<double>("split_fractions", v);
                       if (f.size() != 3) throw InvalidArgument("split_fractions: expected three values");
                       c.split_fractions = {f[0], f[1], f[2]};
                   },
                   [](const ExperimentConfig& c) { return join_numbers(c.split_fractions); }},
        UTD_U64("split_seed", split_seed, "seed of the group-wise split"),

        KeyHandler{{"hidden", "encoder hidden widths"},
                   [](ExperimentConfig& c, const std::string& v) {
                       c.pipeline.hidden = parse_number_list<std::size_t>("hidden", v);
                   },
                   [](const ExperimentConfig& c) { return join_numbers(c.pipeline.hidden); }},
        UTD_SIZE("feature_dim", pipeline.feature_dim, "encoder output width"),
        UTD_SIZE("k", pipeline.k, "number of clusters for single runs"),
        KeyHandler{{"k_list", "cluster counts of the evaluation matrix"},
                   [](ExperimentConfig& c, const std::string& v) {
                       c.k_list = parse_number_list<std::size_t>("k_list", v);
                   },
                   [](const ExperimentConfig& c) { return join_numbers(c.k_list); }},
        UTD_SIZE("cluster_rounds", pipeline.cluster_rounds, "deep clustering rounds"),
        UTD_SIZE("cluster_epochs", pipeline.cluster_epochs, "training epochs per clustering round"),
        UTD_REAL("cluster_lr", pipeline.cluster.learning_rate, "clustering learning rate"),
        UTD_SIZE("cluster_batch", pipeline.cluster.batch_size, "clustering minibatch size"),

        UTD_REAL("alpha", pipeline.meta.alpha, "inner adaptation step"),
        UTD_REAL("outer_lr", pipeline.meta.outer_lr, "meta step size"),
        UTD_SIZE("tasks_per_batch", pipeline.meta.tasks_per_batch, "tasks per meta-batch (T)"),
        UTD_SIZE("iterations", pipeline.meta.iterations, "meta-iterations"),
        UTD_SIZE("support_size", pipeline.meta.support_size, "support samples per episode (M)"),
        UTD_SIZE("query_size", pipeline.meta.query_size, "query samples per episode (N)"),
        KeyHandler{{"meta_mode", "first_order or exact_fd"},
                   [](ExperimentConfig& c, const std::string& v) { c.pipeline.meta.mode = parse_meta_mode(trim(v)); },
                   [](const ExperimentConfig& c) { return to_string(c.pipeline.meta.mode); }},
        KeyHandler{{"strategy", "task sampling for single runs: random or curriculum"},
                   [](ExperimentConfig& c, const std::string& v) { c.pipeline.meta.strategy = parse_strategy(trim(v)); },
                   [](const ExperimentConfig& c) { return to_string(c.pipeline.meta.strategy); }},
        KeyHandler{{"strategies", "task samplings of the evaluation matrix"},
                   [](ExperimentConfig& c, const std::string& v) {
                       c.strategies.clear();
                       for (const auto& s : split_list(v)) c.strategies.push_back(parse_strategy(s));
                   },
                   [](const ExperimentConfig& c) {
                       return join<SamplingStrategy>(c.strategies, [](const SamplingStrategy& s) { return to_string(s); });
                   }},
        UTD_REAL("curriculum_temperature", pipeline.meta.curriculum_temperature, "softmax temperature of curriculum sampling"),
        UTD_REAL("ema_decay", pipeline.meta.ema_decay, "decay of the per-task accuracy averages"),
        UTD_BOOL("meta_init_from_cluster", pipeline.meta.init_from_cluster, "start meta-training from the clustering encoder"),

        UTD_SIZE("finetune_epochs", pipeline.finetune.epochs, "downstream fine-tuning epochs"),
        UTD_REAL("finetune_lr", pipeline.finetune.learning_rate, "downstream learning rate"),
        UTD_BOOL("finetune_reset_head", pipeline.finetune.reset_head, "replace the head before fine-tuning"),
        UTD_SIZE("labelled_per_class", pipeline.labelled_per_class, "labelled downstream samples per class"),
        UTD_SIZE("ae_epochs", pipeline.autoencoder.epochs, "autoencoder epochs"),
        UTD_REAL("ae_lr", pipeline.autoencoder.learning_rate, "autoencoder learning rate"),
        KeyHandler{{"methods", "methods compared by evaluate"},
                   [](ExperimentConfig& c, const std::string& v) {
                       c.methods.clear();
                       for (const auto& s : split_list(v)) c.methods.push_back(parse_method(s));
                   },
                   [](const ExperimentConfig& c) {
                       return join<Method>(c.methods, [](const Method& m) { return to_string(m); });
                   }},

        UTD_PATH("out_dir", out_dir, "output directory"),
        UTD_PATH("dataset", dataset, "dataset file (default: out_dir/dataset.csv)"),
        UTD_PATH("cluster_checkpoint", cluster_checkpoint, "clustering checkpoint for meta-train"),
        UTD_PATH("init_checkpoint", init_checkpoint, "starting network for finetune (empty: from scratch)"),
        UTD_PATH("catalog", catalog, "task catalog for meta-train (empty: all tasks for K)"),
    };
    return table;
}

#undef UTD_SIZE
#undef UTD_U64
#undef UTD_REAL
#undef UTD_BOOL
#undef UTD_PATH

const KeyHandler& handler(const std::string& key) {
    for (const auto& h : handlers()) {
        if (key == h.key.name) return h;
    }
    throw InvalidArgument("unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(Profile profile) { return profile == Profile::smoke ? "smoke" : "desk"; }

Profile parse_profile(const std::string& text) {
    if (text == "smoke") return Profile::smoke;
    if (text == "desk") return Profile::desk;
    throw InvalidArgument("unknown profile '" + text + "' (expected smoke or desk)");
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < seed_count; ++i) out.push_back(seed + i);
    return out;
}

PipelineConfig ExperimentConfig::resolved_pipeline() const {
    PipelineConfig p = pipeline;
    p.seeds = seeds();
    return resolve(p);
}

std::filesystem::path ExperimentConfig::dataset_path() const {
    return dataset.empty() ? out_dir / "dataset.csv" : dataset;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> out;
        for (const auto& h : handlers()) out.push_back(h.key);
        return out;
    }();
    return keys;
}

ExperimentConfig profile_defaults(Profile profile) {
    ExperimentConfig c;
    c.profile = profile;
    c.blobs.separation = 5.0;
    c.blobs.seed = 7;
    c.split_seed = 3;
    c.pipeline.hidden = {64};
    c.pipeline.feature_dim = 32;
    c.pipeline.meta.alpha = 0.05;
    c.pipeline.meta.outer_lr = 0.0003;
    c.pipeline.meta.iterations = 1000;
    c.pipeline.meta.init_from_cluster = false;
    if (profile == Profile::smoke) {
        c.seed_count = 2;
        c.blobs.per_class = 16;
        c.blobs.d_in = 16;
        c.pipeline.hidden = {16};
        c.pipeline.feature_dim = 8;
        c.pipeline.cluster_rounds = 2;
        c.pipeline.cluster_epochs = 2;
        c.pipeline.meta.iterations = 20;
        c.pipeline.finetune.epochs = 20;
        c.pipeline.autoencoder.epochs = 10;
        c.pipeline.labelled_per_class = 5;
        c.k_list = {3, 5};
        c.out_dir = "utd-smoke";
    }
    return c;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
    handler(key).set(config, value);
}

std::string get_setting(const ExperimentConfig& config, const std::string& key) { return handler(key).get(config); }

std::vector<Setting> parse_settings(const std::string& text, const std::string& source) {
    std::vector<Setting> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(source, lineno, "missing key");
        out.push_back({std::move(key), trim(line.substr(eq + 1)), lineno});
    }
    return out;
}

ExperimentConfig apply_config_text(ExperimentConfig base, const std::string& text, const std::string& source) {
    for (const auto& s : parse_settings(text, source)) {
        try {
            apply_setting(base, s.key, s.value);
        } catch (const InvalidArgument& e) {
            throw ParseError(source, s.line, e.what());
        }
    }
    return base;
}

std::string config_to_text(const ExperimentConfig& config) {
    std::string out;
    for (const auto& h : handlers()) out += std::string(h.key.name) + " = " + h.get(config) + "\n";
    return out;
}

std::string config_hash(const ExperimentConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_to_text(config)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void validate(const ExperimentConfig& c) {
    if (c.seed_count < 1) throw InvalidArgument("seed_count must be >= 1");
    if (c.jobs < 1) throw InvalidArgument("jobs must be >= 1");
    const BlobConfig& b = c.blobs;
    if (b.hidden_classes < 2) throw InvalidArgument("hidden_classes must be >= 2");
    if (b.per_class < 2) throw InvalidArgument("per_class must be >= 2");
    if (b.d_in < b.hidden_classes) throw InvalidArgument("d_in must be >= hidden_classes");
    if (!(b.separation > 0.0)) throw InvalidArgument("separation must be positive");
    if (!(b.noise > 0.0)) throw InvalidArgument("noise must be positive");

    std::set<int> positives(c.positive_classes.begin(), c.positive_classes.end());
    if (positives.empty() || positives.size() >= b.hidden_classes) {
        throw InvalidArgument("positive_classes must be a non-empty proper subset of the latent classes");
    }
    for (int p : positives) {
        if (p < 0 || static_cast<std::size_t>(p) >= b.hidden_classes) {
            throw InvalidArgument("positive class " + std::to_string(p) + " out of range");
        }
    }
    double total = 0.0;
    for (double f : c.split_fractions) {
        if (!(f > 0.0)) throw InvalidArgument("split fractions must be positive");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");

    if (c.k_list.empty()) throw InvalidArgument("k_list must not be empty");
    if (c.strategies.empty()) throw InvalidArgument("strategies must not be empty");
    if (c.methods.empty()) throw InvalidArgument("methods must not be empty");
    if (c.out_dir.empty()) throw InvalidArgument("out_dir must not be empty");

    PipelineConfig p = c.resolved_pipeline();
    for (std::size_t k : c.k_list) {
        p.k = k;
        resolve(p);
    }
    if (p.cluster.batch_size < 1) throw InvalidArgument("cluster_batch must be >= 1");
    if (!(p.cluster.learning_rate > 0.0)) throw InvalidArgument("cluster_lr must be positive");
    if (!(p.finetune.learning_rate > 0.0)) throw InvalidArgument("finetune_lr must be positive");
    if (!(p.autoencoder.learning_rate > 0.0)) throw InvalidArgument("ae_lr must be positive");
    if (p.meta.support_size + p.meta.query_size > b.per_class * b.hidden_classes) {
        throw InvalidArgument("episodes larger than the dataset");
    }
}

}  // namespace utd
