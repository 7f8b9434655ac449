#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "utd/data.hpp"
#include "utd/eval.hpp"
#include "utd/meta.hpp"

namespace utd {

enum class Profile { smoke, desk };

std::string to_string(Profile profile);
Profile parse_profile(const std::string& text);

/// Every knob of the pipeline in one place. The text form is a list of
/// `key = value` lines; see `config_keys()` for the vocabulary.
struct ExperimentConfig {
    Profile profile = Profile::desk;
    /// Base seed of single-run commands and first seed of the evaluation matrix.
    std::uint64_t seed = 0;
    std::size_t seed_count = 10;

    BlobConfig blobs;
    std::vector<int> positive_classes{0, 1, 2, 3};
    std::array<double, 3> split_fractions{45.0 / 117.0, 13.0 / 117.0, 59.0 / 117.0};
    std::uint64_t split_seed = 0;

    PipelineConfig pipeline;
    std::vector<std::size_t> k_list{3, 4, 5};
    std::vector<SamplingStrategy> strategies{SamplingStrategy::random, SamplingStrategy::curriculum};
    std::vector<Method> methods = all_methods();
    /// Independent (K, strategy, seed) cells evaluated concurrently.
    std::size_t jobs = 1;

    std::filesystem::path out_dir = "utd-out";
    std::filesystem::path dataset;
    std::filesystem::path cluster_checkpoint;
    std::filesystem::path init_checkpoint;
    std::filesystem::path catalog;

    /// seed, seed+1, ..., seed+seed_count-1
    std::vector<std::uint64_t> seeds() const;
    /// Pipeline settings with the seed list filled in and stage configs resolved.
    PipelineConfig resolved_pipeline() const;
    std::filesystem::path dataset_path() const;
};

struct ConfigKey {
    const char* name;
    const char* description;
};
const std::vector<ConfigKey>& config_keys();

ExperimentConfig profile_defaults(Profile profile);

/// Sets one key from its text value. Unknown keys and malformed values throw
/// InvalidArgument.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_setting(const ExperimentConfig& config, const std::string& key);

struct Setting {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// `key = value` pairs from config text; `#` starts a comment. ParseError on
/// malformed lines.
std::vector<Setting> parse_settings(const std::string& text, const std::string& source);

/// Applies parsed settings on top of `base`, reporting bad entries with their line.
ExperimentConfig apply_config_text(ExperimentConfig base, const std::string& text, const std::string& source);

/// Canonical text: every key, in `config_keys()` order. Reads back to an equal config.
std::string config_to_text(const ExperimentConfig& config);
/// FNV-1a of the canonical text, 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Checks every knob against the module preconditions. Throws InvalidArgument.
void validate(const ExperimentConfig& config);

}  // namespace utd
