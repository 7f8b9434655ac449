#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "utd/matrix.hpp"

namespace utd {

enum class Split { none, train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct Sample {
    std::vector<double> features;
    std::int64_t group_id = 0;
    /// Generator ground truth. Only labelling and reporting code reads it.
    int hidden_class = 0;
    int y = 0;
    Split split = Split::none;
    friend bool operator==(const Sample&, const Sample&) = default;
};

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetManifest {
    std::size_t sample_count = 0;
    std::size_t d_in = 0;
    std::size_t hidden_classes = 0;
    std::array<double, 3> split_fractions{1.0, 0.0, 0.0};
    std::uint64_t seed = 0;
    int format_version = kDatasetFormatVersion;
    std::vector<int> positive_classes;
    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct BlobConfig {
    std::size_t hidden_classes = 8;
    std::size_t per_class = 40;
    std::size_t d_in = 32;
    double separation = 4.0;
    double noise = 1.0;
    std::uint64_t seed = 0;
};

/// Gaussian blobs whose means sit on a randomly rotated simplex, so every
/// pair of means is exactly `separation` apart. Consecutive samples of a
/// seeded shuffle share a group id (two per group).
Dataset generate_blobs(const BlobConfig& config);

/// y = 1 iff the sample's hidden class is listed.
Dataset assign_downstream_labels(Dataset dataset, const std::vector<int>& positive_classes);

/// Shuffles the group ids and hands out whole groups to train/val/test in
/// the given proportions.
Dataset split_groupwise(Dataset dataset, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Text rows "group_id,split,y,hidden_class,f1,...,fd" under a versioned header.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in, const DatasetManifest& manifest, const std::string& source = "<dataset>");

/// Writes the data file and its manifest sidecar (path + ".manifest.json").
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& data_path);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Training-facing views. They carry features, downstream labels and sample
/// indices only; the hidden class is not copied.
struct LabelledView {
    RealMatrix features;
    std::vector<int> labels;
    std::vector<std::size_t> sample_index;
};

LabelledView labelled_view(const Dataset& dataset, Split split);
RealMatrix unlabelled_features(const Dataset& dataset, Split split);

}  // namespace utd
