#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "utd/config.hpp"
#include "utd/data.hpp"
#include "utd/eval.hpp"

namespace utd {

/// Synthetic dataset with downstream labels and a group-wise split.
Dataset build_dataset(const ExperimentConfig& config);

struct MatrixReport {
    /// One row per configured method at the single-run K and strategy.
    std::vector<EvalReport> baselines;
    /// umt_finetune for every (K, strategy), K-major.
    std::vector<EvalReport> cells;
};

/// Baselines plus the K x strategy matrix, every number averaged over
/// `config.seeds()`. Seeds run on up to `config.jobs` threads; the merge is
/// ordered, so results do not depend on the thread count.
MatrixReport run_experiment_matrix(const Dataset& dataset, const ExperimentConfig& config);

void print_table(std::ostream& out, const MatrixReport& report);
std::string matrix_to_jsonl(const MatrixReport& report);
MatrixReport matrix_from_jsonl(const std::string& text);

// Subcommands. Outputs land in config.out_dir; each also writes
// `<name>.provenance`, a config file that re-runs it.
void cmd_generate(const ExperimentConfig& config, std::ostream& out);
void cmd_cluster(const ExperimentConfig& config, std::ostream& out);
void cmd_design_tasks(const ExperimentConfig& config, std::ostream& out);
void cmd_meta_train(const ExperimentConfig& config, std::ostream& out);
void cmd_finetune(const ExperimentConfig& config, std::ostream& out);
void cmd_evaluate(const ExperimentConfig& config, std::ostream& out);
void cmd_benchmark(const ExperimentConfig& config, std::ostream& out);

const std::vector<std::string>& command_names();

/// Runs a subcommand by name. Errors become one line on `err`,
/// "utd: error: <category>: <message>", and a nonzero return.
int run_command(const std::string& name, const ExperimentConfig& config, std::ostream& out, std::ostream& err);

/// 2 for input problems (io, parse, invalid-argument), 1 otherwise.
int exit_code(const Error& error);
std::string diagnostic(const std::string& category, const std::string& message);

// Artifact names inside out_dir.
std::filesystem::path cluster_checkpoint_path(const ExperimentConfig& config);
std::filesystem::path catalog_path(const ExperimentConfig& config);
std::filesystem::path meta_checkpoint_path(const ExperimentConfig& config);
std::filesystem::path meta_log_path(const ExperimentConfig& config);
std::filesystem::path finetune_checkpoint_path(const ExperimentConfig& config);
std::filesystem::path results_path(const ExperimentConfig& config);

}  // namespace utd
