#include "utd/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "utd/checkpoint.hpp"
#include "utd/clustering.hpp"
#include "utd/io.hpp"
#include "utd/meta.hpp"
#include "utd/rng.hpp"
#include "utd/tasks.hpp"

namespace utd {
namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void prepare(const ExperimentConfig& config) {
    validate(config);
    std::filesystem::create_directories(config.out_dir);
}

void write_provenance(const ExperimentConfig& config, const std::string& command) {
    std::string text = "# utd " + command + "\n# revision " + build_revision() + "\n# config_hash " +
                       config_hash(config) + "\n" + config_to_text(config);
    write_file_atomic(config.out_dir / (command + ".provenance"), text);
}

Provenance provenance_of(const ExperimentConfig& config) {
    return {config_hash(config), config.seed, build_revision()};
}

Dataset load_dataset(const ExperimentConfig& config) {
    const auto path = config.dataset_path();
    if (!std::filesystem::exists(path)) throw IoError("dataset not found: " + path.string());
    return read_dataset(path);
}

PipelineConfig single_run_pipeline(const ExperimentConfig& config) {
    PipelineConfig p = config.pipeline;
    p.seeds = {config.seed};
    return resolve(p);
}

ClusterModel load_cluster_model(const ExperimentConfig& config) {
    const auto path = config.cluster_checkpoint.empty() ? cluster_checkpoint_path(config) : config.cluster_checkpoint;
    if (!std::filesystem::exists(path)) throw IoError("cluster checkpoint not found: " + path.string());
    return cluster_model_from(load_checkpoint(path));
}

TaskCatalog load_or_enumerate_catalog(const ExperimentConfig& config, std::size_t k) {
    if (config.catalog.empty()) return enumerate_tasks(k);
    std::ifstream in(config.catalog);
    if (!in) throw IoError("cannot open catalog " + config.catalog.string());
    TaskCatalog catalog = read_catalog(in, config.catalog.string());
    if (catalog.k > k) throw InvalidArgument("catalog refers to clusters beyond K = " + std::to_string(k));
    catalog.k = k;
    return catalog;
}

std::string log_to_json(const IterationLog& entry) {
    nlohmann::ordered_json j;
    j["iteration"] = entry.iteration;
    j["objective"] = entry.objective;
    j["tasks"] = entry.tasks;
    j["accuracies"] = entry.accuracies;
    return j.dump();
}

struct SeedOutcome {
    std::vector<MethodResult> baselines;
    std::vector<MethodResult> cells;
};

SeedOutcome run_seed(const Dataset& dataset, const ExperimentConfig& config, const PipelineConfig& base,
                     std::uint64_t seed) {
    SeedOutcome outcome;
    SeedRun run(dataset, base, seed);
    std::optional<MethodResult> base_umt;
    for (Method m : config.methods) {
        outcome.baselines.push_back(run.evaluate(m));
        if (m == Method::umt_finetune) base_umt = outcome.baselines.back();
    }
    for (std::size_t k : config.k_list) {
        std::optional<ClusterModel> shared;
        if (k == base.k) shared = run.cluster_model();
        for (SamplingStrategy strategy : config.strategies) {
            if (k == base.k && strategy == base.meta.strategy && base_umt) {
                outcome.cells.push_back(*base_umt);
                continue;
            }
            PipelineConfig p = base;
            p.k = k;
            p.meta.strategy = strategy;
            SeedRun cell(dataset, p, seed);
            if (shared) cell.set_cluster_model(*shared);
            outcome.cells.push_back(cell.evaluate(Method::umt_finetune));
            if (!shared) shared = cell.cluster_model();
        }
    }
    return outcome;
}

}  // namespace

Dataset build_dataset(const ExperimentConfig& config) {
    Dataset ds = generate_blobs(config.blobs);
    ds = assign_downstream_labels(std::move(ds), config.positive_classes);
    return split_groupwise(std::move(ds), config.split_fractions, config.split_seed);
}

MatrixReport run_experiment_matrix(const Dataset& dataset, const ExperimentConfig& config) {
    validate(config);
    const PipelineConfig base = config.resolved_pipeline();
    const std::vector<std::uint64_t> seeds = config.seeds();
    std::vector<SeedOutcome> outcomes(seeds.size());
    std::vector<std::exception_ptr> failures(seeds.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            try {
                outcomes[i] = run_seed(dataset, config, base, seeds[i]);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(config.jobs, seeds.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    MatrixReport report;
    std::vector<MethodResult> column(seeds.size());
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        for (std::size_t s = 0; s < seeds.size(); ++s) column[s] = outcomes[s].baselines[m];
        report.baselines.push_back(aggregate(config.methods[m], base, seeds, column));
    }
    std::size_t cell = 0;
    for (std::size_t k : config.k_list) {
        for (SamplingStrategy strategy : config.strategies) {
            PipelineConfig p = base;
            p.k = k;
            p.meta.strategy = strategy;
            for (std::size_t s = 0; s < seeds.size(); ++s) column[s] = outcomes[s].cells[cell];
            report.cells.push_back(aggregate(Method::umt_finetune, p, seeds, column));
            ++cell;
        }
    }
    return report;
}

void print_table(std::ostream& out, const MatrixReport& report) {
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %3s %-11s %7s %7s\n", "method", "K", "strategy", "AUC", "SE");
    out << line;
    auto row = [&](const EvalReport& r) {
        std::snprintf(line, sizeof line, "%-14s %3s %-11s %7s %7s\n", r.method.c_str(),
                      r.k ? std::to_string(r.k).c_str() : "-", r.strategy.c_str(), fixed(r.auc).c_str(),
                      fixed(r.standard_error).c_str());
        out << line;
    };
    for (const auto& r : report.baselines) row(r);
    if (!report.cells.empty()) {
        out << "\numt_finetune by K and task sampling\n";
        for (const auto& r : report.cells) row(r);
    }
}

std::string matrix_to_jsonl(const MatrixReport& report) {
    std::string out;
    auto emit = [&](const EvalReport& r, const char* section) {
        auto j = nlohmann::ordered_json::parse(report_to_json(r));
        j["section"] = section;
        out += j.dump() + "\n";
    };
    for (const auto& r : report.baselines) emit(r, "baseline");
    for (const auto& r : report.cells) emit(r, "matrix");
    return out;
}

MatrixReport matrix_from_jsonl(const std::string& text) {
    MatrixReport report;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::string section;
        try {
            section = nlohmann::json::parse(line).at("section").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("bad results record: ") + e.what());
        }
        auto& target = section == "matrix" ? report.cells : report.baselines;
        target.push_back(report_from_json(line));
    }
    return report;
}

std::filesystem::path cluster_checkpoint_path(const ExperimentConfig& c) {
    return c.out_dir / ("cluster_k" + std::to_string(c.pipeline.k) + ".ckpt");
}
std::filesystem::path catalog_path(const ExperimentConfig& c) {
    return c.out_dir / ("tasks_k" + std::to_string(c.pipeline.k) + ".txt");
}
std::filesystem::path meta_checkpoint_path(const ExperimentConfig& c) {
    return c.out_dir / ("meta_k" + std::to_string(c.pipeline.k) + "_" + to_string(c.pipeline.meta.strategy) + ".ckpt");
}
std::filesystem::path meta_log_path(const ExperimentConfig& c) {
    return c.out_dir / ("meta_k" + std::to_string(c.pipeline.k) + "_" + to_string(c.pipeline.meta.strategy) + ".log.jsonl");
}
std::filesystem::path finetune_checkpoint_path(const ExperimentConfig& c) { return c.out_dir / "finetuned.ckpt"; }
std::filesystem::path results_path(const ExperimentConfig& c) { return c.out_dir / "results.jsonl"; }

void cmd_generate(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    const Dataset ds = build_dataset(config);
    write_dataset(ds, config.dataset_path());
    std::size_t counts[4] = {0, 0, 0, 0};
    std::size_t positives = 0;
    for (const auto& s : ds.samples) {
        ++counts[static_cast<int>(s.split)];
        positives += s.y == 1;
    }
    out << "dataset " << config.dataset_path().string() << "\n"
        << "samples " << ds.samples.size() << " (train " << counts[1] << ", val " << counts[2] << ", test "
        << counts[3] << ")\n"
        << "positives " << positives << ", negatives " << ds.samples.size() - positives << "\n";
    write_provenance(config, "generate");
}

void cmd_cluster(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    const Dataset ds = load_dataset(config);
    const PipelineConfig p = single_run_pipeline(config);
    const ClusterModel model = deep_cluster(unlabelled_features(ds, Split::train), p.k, p.cluster_rounds,
                                            p.cluster_epochs, p.cluster, derive_seed(config.seed, {101}));
    save_checkpoint(to_checkpoint(model, provenance_of(config)), cluster_checkpoint_path(config));

    nlohmann::ordered_json j;
    j["k"] = model.k;
    j["kappa"] = model.kappa;
    j["selected_round"] = model.selected_round;
    j["round_kappas"] = model.round_kappas;
    std::vector<std::size_t> sizes(model.k, 0);
    for (int label : model.pseudo_labels) ++sizes[static_cast<std::size_t>(label)];
    j["cluster_sizes"] = sizes;
    auto report = cluster_checkpoint_path(config);
    report.replace_extension(".json");
    write_file_atomic(report, j.dump() + "\n");

    out << "K " << model.k << "  kappa " << fixed(model.kappa) << "  (round " << model.selected_round << ")\n"
        << "checkpoint " << cluster_checkpoint_path(config).string() << "\n";
    write_provenance(config, "cluster");
}

void cmd_design_tasks(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    const TaskCatalog catalog = enumerate_tasks(config.pipeline.k);
    std::ostringstream text;
    write_catalog(text, catalog);
    write_file_atomic(catalog_path(config), text.str());
    out << "K " << catalog.k << "  tasks " << catalog.tasks.size() << "\n"
        << "catalog " << catalog_path(config).string() << "\n";
    write_provenance(config, "design-tasks");
}

void cmd_meta_train(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    const Dataset ds = load_dataset(config);
    const ClusterModel model = load_cluster_model(config);
    const PipelineConfig p = single_run_pipeline(config);
    MetaConfig meta = p.meta;
    meta.seed = derive_seed(config.seed, {103});
    const RealMatrix data = unlabelled_features(ds, Split::train);
    if (model.pseudo_labels.size() != data.rows()) {
        throw InvalidArgument("cluster checkpoint was built for a different dataset");
    }
    const MetaTrainingResult result = run_meta_training(data, model, load_or_enumerate_catalog(config, model.k), meta);

    std::string log;
    for (const auto& entry : result.log) log += log_to_json(entry) + "\n";
    write_file_atomic(meta_log_path(config), log);
    save_checkpoint(to_checkpoint(result.psi, "meta_model", provenance_of(config)), meta_checkpoint_path(config));

    out << "tasks " << result.eligible.tasks.size() << " eligible, " << result.excluded << " excluded\n";
    if (!result.log.empty()) {
        out << "objective " << fixed(result.log.front().objective) << " -> " << fixed(result.log.back().objective)
            << " over " << result.log.size() << " iterations\n";
    }
    out << "checkpoint " << meta_checkpoint_path(config).string() << "\n";
    write_provenance(config, "meta-train");
}

void cmd_finetune(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    const Dataset ds = load_dataset(config);
    const PipelineConfig p = single_run_pipeline(config);
    SeedRun run(ds, p, config.seed);
    const std::size_t d_in = run.unlabelled_train().cols();
    const std::uint64_t head_seed = derive_seed(config.seed, {105});

    Network init;
    std::string source = "scratch";
    if (config.init_checkpoint.empty()) {
        init.encoder = init_encoder(d_in, p.hidden, p.feature_dim, derive_seed(config.seed, {106}));
        init.head = init_head(p.feature_dim, 2, head_seed);
    } else {
        if (!std::filesystem::exists(config.init_checkpoint)) {
            throw IoError("init checkpoint not found: " + config.init_checkpoint.string());
        }
        const Checkpoint ckpt = load_checkpoint(config.init_checkpoint);
        if (ckpt.kind == "cluster_model") {
            const ClusterModel model = cluster_model_from(ckpt);
            init = {model.theta, init_head(model.theta.feature_dim(), 2, head_seed)};
        } else {
            init = network_from(ckpt);
        }
        source = ckpt.kind;
        if (init.encoder.input_dim != d_in || init.head.num_classes() != 2) {
            throw InvalidArgument("init checkpoint does not fit a binary task on this dataset");
        }
    }

    const FineTuneResult tuned = run.fine_tune_from(init);
    const double test_auc =
        auc_from_labels(positive_scores(tuned.model, run.test().features), run.test().labels);
    save_checkpoint(to_checkpoint(tuned.model, "network", provenance_of(config)), finetune_checkpoint_path(config));

    nlohmann::ordered_json j;
    j["init"] = source;
    j["selected_epoch"] = tuned.selected_epoch;
    j["val_auc"] = tuned.val_history[tuned.selected_epoch];
    j["test_auc"] = test_auc;
    j["val_history"] = tuned.val_history;
    write_file_atomic(config.out_dir / "finetune.json", j.dump() + "\n");

    out << "init " << source << "  epoch " << tuned.selected_epoch << "  val AUC "
        << fixed(tuned.val_history[tuned.selected_epoch]) << "  test AUC " << fixed(test_auc) << "\n"
        << "checkpoint " << finetune_checkpoint_path(config).string() << "\n";
    write_provenance(config, "finetune");
}

void cmd_evaluate(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    const Dataset ds = load_dataset(config);
    const MatrixReport report = run_experiment_matrix(ds, config);
    write_file_atomic(results_path(config), matrix_to_jsonl(report));
    print_table(out, report);
    write_provenance(config, "evaluate");
}

void cmd_benchmark(const ExperimentConfig& config, std::ostream& out) {
    prepare(config);
    out << "== generate\n";
    cmd_generate(config, out);
    out << "== cluster\n";
    cmd_cluster(config, out);
    out << "== design-tasks\n";
    cmd_design_tasks(config, out);
    out << "== meta-train\n";
    cmd_meta_train(config, out);
    out << "== finetune\n";
    ExperimentConfig ft = config;
    ft.init_checkpoint = meta_checkpoint_path(config);
    cmd_finetune(ft, out);
    out << "== evaluate (" << config.seed_count << " seeds)\n";
    cmd_evaluate(config, out);

    const MatrixReport report = matrix_from_jsonl(read_file(results_path(config)));
    const EvalReport* scratch = nullptr;
    const EvalReport* umt = nullptr;
    for (const auto& r : report.baselines) {
        if (r.method == "from_scratch") scratch = &r;
        if (r.method == "umt_finetune") umt = &r;
    }
    if (scratch && umt) out << "\numt_finetune - from_scratch: " << fixed(umt->auc - scratch->auc) << "\n";
    write_provenance(config, "benchmark");
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"generate",  "cluster",  "design-tasks", "meta-train",
                                                   "finetune", "evaluate", "benchmark"};
    return names;
}

int exit_code(const Error& error) {
    const std::string c = error.category();
    return (c == "io" || c == "parse" || c == "invalid-argument") ? 2 : 1;
}

std::string diagnostic(const std::string& category, const std::string& message) {
    std::string flat = message;
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    return "utd: error: " + category + ": " + flat;
}

int run_command(const std::string& name, const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    using Fn = void (*)(const ExperimentConfig&, std::ostream&);
    static const std::vector<std::pair<std::string, Fn>> table = {
        {"generate", cmd_generate},     {"cluster", cmd_cluster},   {"design-tasks", cmd_design_tasks},
        {"meta-train", cmd_meta_train}, {"finetune", cmd_finetune}, {"evaluate", cmd_evaluate},
        {"benchmark", cmd_benchmark}};
    try {
        for (const auto& [n, fn] : table) {
            if (n == name) {
                fn(config, out);
                return 0;
            }
        }
        throw InvalidArgument("unknown command '" + name + "'");
    } catch (const Error& e) {
        err << diagnostic(e.category(), e.what()) << "\n";
        return exit_code(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << diagnostic("io", e.what()) << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << diagnostic("internal", e.what()) << "\n";
        return 1;
    }
}

}  // namespace utd
