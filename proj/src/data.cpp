#include "utd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "utd/errors.hpp"
#include "utd/io.hpp"
#include "utd/rng.hpp"

namespace utd {
namespace {

// Columns of a random orthonormal basis, by Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> random_orthonormal(std::size_t dim, std::size_t count, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        std::vector<double> v(dim);
        for (double& x : v) x = normal(rng);
        for (const auto& b : basis) {
            const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-6) continue;
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

std::string split_fields_error(std::size_t got, std::size_t want) {
    return "expected " + std::to_string(want) + " fields, found " + std::to_string(got);
}

template <typename T>
T parse_number(std::string_view text, const std::string& source, std::size_t line, const char* what) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(source, line, std::string("bad ") + what + " '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

std::string to_string(Split split) {
    switch (split) {
        case Split::none: return "none";
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "none";
}

Split parse_split(const std::string& text) {
    if (text == "none") return Split::none;
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "test") return Split::test;
    throw InvalidArgument("unknown split '" + text + "'");
}

Dataset generate_blobs(const BlobConfig& config) {
    if (config.hidden_classes < 2) throw InvalidArgument("need at least 2 hidden classes");
    if (config.per_class < 1) throw InvalidArgument("need at least 1 sample per class");
    if (config.d_in < config.hidden_classes) {
        throw InvalidArgument("d_in must be at least the number of hidden classes");
    }
    if (!(config.separation > 0.0)) throw InvalidArgument("separation must be positive");
    if (!(config.noise >= 0.0)) throw InvalidArgument("noise must be non-negative");

    std::mt19937_64 rng(derive_seed(config.seed, {1}));
    const auto basis = random_orthonormal(config.d_in, config.hidden_classes, rng);
    const double scale = config.separation / std::sqrt(2.0);

    Dataset ds;
    ds.manifest.d_in = config.d_in;
    ds.manifest.hidden_classes = config.hidden_classes;
    ds.manifest.seed = config.seed;
    std::mt19937_64 noise_rng(derive_seed(config.seed, {2}));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t g = 0; g < config.hidden_classes; ++g) {
        for (std::size_t i = 0; i < config.per_class; ++i) {
            Sample s;
            s.hidden_class = static_cast<int>(g);
            s.features.resize(config.d_in);
            for (std::size_t d = 0; d < config.d_in; ++d) {
                const double eps = normal(noise_rng);
                s.features[d] = scale * basis[g][d] + (config.noise > 0.0 ? config.noise * eps : 0.0);
            }
            ds.samples.push_back(std::move(s));
        }
    }

    std::vector<std::size_t> order(ds.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 group_rng(derive_seed(config.seed, {3}));
    std::shuffle(order.begin(), order.end(), group_rng);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        ds.samples[order[pos]].group_id = static_cast<std::int64_t>(pos / 2);
    }
    ds.manifest.sample_count = ds.samples.size();
    return ds;
}

Dataset assign_downstream_labels(Dataset dataset, const std::vector<int>& positive_classes) {
    const auto g = static_cast<int>(dataset.manifest.hidden_classes);
    std::set<int> positive(positive_classes.begin(), positive_classes.end());
    if (positive.empty()) throw InvalidArgument("positive class set is empty");
    if (static_cast<int>(positive.size()) >= g) throw InvalidArgument("positive classes must be a proper subset");
    for (int c : positive) {
        if (c < 0 || c >= g) throw InvalidArgument("positive class " + std::to_string(c) + " out of range");
    }
    for (auto& s : dataset.samples) s.y = positive.count(s.hidden_class) ? 1 : 0;
    dataset.manifest.positive_classes.assign(positive.begin(), positive.end());
    return dataset;
}

Dataset split_groupwise(Dataset dataset, const std::array<double, 3>& fractions, std::uint64_t seed) {
    for (double f : fractions) {
        if (!(f > 0.0)) throw InvalidArgument("split fractions must all be positive");
    }
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
        throw InvalidArgument("split fractions must sum to 1");
    }
    std::vector<std::int64_t> groups;
    for (const auto& s : dataset.samples) groups.push_back(s.group_id);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());

    const auto n = static_cast<double>(groups.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * n));
    const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * n));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= groups.size()) {
        throw InvalidArgument("split of " + std::to_string(groups.size()) + " groups leaves a split empty");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(groups.begin(), groups.end(), rng);
    std::map<std::int64_t, Split> where;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        where[groups[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    }
    for (auto& s : dataset.samples) s.split = where.at(s.group_id);
    dataset.manifest.split_fractions = fractions;
    return dataset;
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
    out << "utd-dataset," << kDatasetFormatVersion << ",d_in=" << dataset.manifest.d_in << '\n';
    for (const auto& s : dataset.samples) {
        out << s.group_id << ',' << to_string(s.split) << ',' << s.y << ',' << s.hidden_class;
        for (double v : s.features) out << ',' << format_real(v);
        out << '\n';
    }
}

Dataset read_dataset(std::istream& in, const DatasetManifest& manifest, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
    const std::string expected = "utd-dataset," + std::to_string(kDatasetFormatVersion) + ",d_in=";
    if (line.rfind("utd-dataset,", 0) != 0) throw ParseError(source, 1, "not a dataset file");
    if (line.rfind(expected, 0) != 0) throw ParseError(source, 1, "unsupported dataset format version");
    const auto d_in = parse_number<std::size_t>(std::string_view(line).substr(expected.size()), source, 1, "d_in");
    if (d_in != manifest.d_in) throw ParseError(source, 1, "d_in disagrees with the manifest");

    Dataset ds;
    ds.manifest = manifest;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != 4 + d_in) throw ParseError(source, lineno, split_fields_error(fields.size(), 4 + d_in));
        Sample s;
        s.group_id = parse_number<std::int64_t>(fields[0], source, lineno, "group id");
        try {
            s.split = parse_split(std::string(fields[1]));
        } catch (const InvalidArgument& e) {
            throw ParseError(source, lineno, e.what());
        }
        s.y = parse_number<int>(fields[2], source, lineno, "label");
        if (s.y != 0 && s.y != 1) throw ParseError(source, lineno, "label must be 0 or 1");
        s.hidden_class = parse_number<int>(fields[3], source, lineno, "hidden class");
        s.features.resize(d_in);
        for (std::size_t d = 0; d < d_in; ++d) {
            s.features[d] = parse_number<double>(fields[4 + d], source, lineno, "feature");
            if (!std::isfinite(s.features[d])) throw ParseError(source, lineno, "non-finite feature");
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.size() != manifest.sample_count) {
        throw ParseError(source, lineno, "file has " + std::to_string(ds.samples.size()) +
                                             " samples, manifest says " + std::to_string(manifest.sample_count));
    }
    return ds;
}

std::filesystem::path manifest_path(const std::filesystem::path& data_path) {
    return std::filesystem::path(data_path.string() + ".manifest.json");
}

std::string manifest_to_json(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["format_version"] = m.format_version;
    j["sample_count"] = m.sample_count;
    j["d_in"] = m.d_in;
    j["hidden_classes"] = m.hidden_classes;
    j["split_fractions"] = {m.split_fractions[0], m.split_fractions[1], m.split_fractions[2]};
    j["seed"] = m.seed;
    j["positive_classes"] = m.positive_classes;
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    DatasetManifest m;
    try {
        const auto j = nlohmann::json::parse(text);
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != kDatasetFormatVersion) throw IoError("unsupported manifest version");
        m.sample_count = j.at("sample_count").get<std::size_t>();
        m.d_in = j.at("d_in").get<std::size_t>();
        m.hidden_classes = j.at("hidden_classes").get<std::size_t>();
        const auto f = j.at("split_fractions").get<std::vector<double>>();
        if (f.size() != 3) throw IoError("split_fractions must have 3 entries");
        m.split_fractions = {f[0], f[1], f[2]};
        m.seed = j.at("seed").get<std::uint64_t>();
        m.positive_classes = j.at("positive_classes").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad manifest: ") + e.what());
    }
    if (std::abs(m.split_fractions[0] + m.split_fractions[1] + m.split_fractions[2] - 1.0) > 1e-9) {
        throw IoError("manifest split fractions do not sum to 1");
    }
    return m;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ostringstream data;
    write_dataset(data, dataset);
    write_file_atomic(path, data.str());
    write_file_atomic(manifest_path(path), manifest_to_json(dataset.manifest));
}

Dataset read_dataset(const std::filesystem::path& path) {
    const DatasetManifest manifest = manifest_from_json(read_file(manifest_path(path)));
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path.string());
    return read_dataset(in, manifest, path.string());
}

LabelledView labelled_view(const Dataset& dataset, Split split) {
    LabelledView view;
    std::vector<double> values;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        if (s.split != split) continue;
        values.insert(values.end(), s.features.begin(), s.features.end());
        view.labels.push_back(s.y);
        view.sample_index.push_back(i);
    }
    view.features = RealMatrix(view.labels.size(), dataset.manifest.d_in, std::move(values));
    return view;
}

RealMatrix unlabelled_features(const Dataset& dataset, Split split) {
    return labelled_view(dataset, split).features;
}

}  // namespace utd
