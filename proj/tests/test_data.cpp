#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "utd/clustering.hpp"
#include "utd/data.hpp"

using namespace utd;

namespace {

Dataset small(std::uint64_t seed) {
    BlobConfig cfg;
    cfg.hidden_classes = 4;
    cfg.per_class = 10;
    cfg.d_in = 6;
    cfg.seed = seed;
    return split_groupwise(assign_downstream_labels(generate_blobs(cfg), {0, 1}), {0.5, 0.25, 0.25}, seed);
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("utd-test-data-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("blob generator shape and group pairing") {
    BlobConfig cfg;
    const Dataset ds = generate_blobs(cfg);
    CHECK(ds.samples.size() == cfg.hidden_classes * cfg.per_class);
    CHECK(ds.manifest.sample_count == ds.samples.size());
    std::map<std::int64_t, int> group_sizes;
    for (const auto& s : ds.samples) {
        CHECK(s.features.size() == cfg.d_in);
        ++group_sizes[s.group_id];
    }
    for (const auto& [g, n] : group_sizes) CHECK(n == 2);
}

TEST_CASE("class means sit at the requested separation") {
    BlobConfig cfg;
    cfg.hidden_classes = 3;
    cfg.per_class = 4000;
    cfg.d_in = 5;
    cfg.separation = 6.0;
    cfg.noise = 1.0;
    const Dataset ds = generate_blobs(cfg);
    std::vector<std::vector<double>> mean(3, std::vector<double>(5, 0.0));
    for (const auto& s : ds.samples) {
        for (std::size_t j = 0; j < 5; ++j) mean[s.hidden_class][j] += s.features[j] / cfg.per_class;
    }
    for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < 5; ++j) d2 += (mean[a][j] - mean[b][j]) * (mean[a][j] - mean[b][j]);
            // sample means wander by about sqrt(2 * 5 / 4000)
            CHECK(std::abs(std::sqrt(d2) - 6.0) < 0.2);
        }
    }
}

TEST_CASE("generation is seeded") {
    CHECK(small(3) == small(3));
    CHECK_FALSE(small(3) == small(4));
}

TEST_CASE("downstream labels follow the positive classes") {
    const Dataset ds = small(1);
    for (const auto& s : ds.samples) CHECK(s.y == (s.hidden_class < 2 ? 1 : 0));
    CHECK_THROWS_AS(assign_downstream_labels(generate_blobs(BlobConfig{}), {}), InvalidArgument);
    CHECK_THROWS_AS(assign_downstream_labels(generate_blobs(BlobConfig{}), {0, 1, 2, 3, 4, 5, 6, 7}), InvalidArgument);
}

TEST_CASE("group-wise split keeps groups together") {
    BlobConfig cfg;
    cfg.hidden_classes = 3;
    cfg.per_class = 20;
    cfg.d_in = 4;
    const Dataset base = generate_blobs(cfg);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Dataset ds = split_groupwise(base, {45.0 / 117, 13.0 / 117, 59.0 / 117}, seed);
        std::map<std::int64_t, Split> where;
        std::size_t per_split[4] = {0, 0, 0, 0};
        for (const auto& s : ds.samples) {
            auto [it, fresh] = where.emplace(s.group_id, s.split);
            if (!fresh) CHECK(it->second == s.split);
            CHECK(s.split != Split::none);
            ++per_split[static_cast<int>(s.split)];
        }
        // 30 groups: llround of 11.54, 3.33, 15.13
        CHECK(per_split[1] == 24);
        CHECK(per_split[2] == 6);
        CHECK(per_split[3] == 30);
    }
}

TEST_CASE("split fractions are validated") {
    const Dataset base = generate_blobs(BlobConfig{});
    CHECK_THROWS_AS(split_groupwise(base, {0.5, 0.5, 0.5}, 0), InvalidArgument);
    CHECK_THROWS_AS(split_groupwise(base, {1.0, 0.0, 0.0}, 0), InvalidArgument);
    CHECK_THROWS_AS(split_groupwise(base, {0.998, 0.001, 0.001}, 0), InvalidArgument);
}

TEST_CASE("dataset files round trip exactly") {
    const auto dir = temp_dir("roundtrip");
    const Dataset ds = small(9);
    write_dataset(ds, dir / "d.csv");
    CHECK(std::filesystem::exists(manifest_path(dir / "d.csv")));
    CHECK(read_dataset(dir / "d.csv") == ds);
    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest json round trip") {
    const Dataset ds = small(2);
    CHECK(manifest_from_json(manifest_to_json(ds.manifest)) == ds.manifest);
    CHECK_THROWS_AS(manifest_from_json("{"), IoError);
}

TEST_CASE("malformed rows report their line") {
    const Dataset ds = small(5);
    std::ostringstream out;
    write_dataset(out, ds);
    std::string text = out.str();
    // damage the third line
    std::size_t pos = 0;
    for (int i = 0; i < 2; ++i) pos = text.find('\n', pos) + 1;
    text.insert(pos, "x");
    std::istringstream in(text);
    try {
        read_dataset(in, ds.manifest, "d");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("manifest disagreements are rejected") {
    const Dataset ds = small(5);
    std::ostringstream out;
    write_dataset(out, ds);
    DatasetManifest wrong = ds.manifest;
    wrong.sample_count += 1;
    std::istringstream in(out.str());
    CHECK_THROWS_AS(read_dataset(in, wrong, "d"), Error);
}

TEST_CASE("missing files are io errors") {
    CHECK_THROWS_AS(read_dataset(std::filesystem::path("/nonexistent/d.csv")), IoError);
}

TEST_CASE("views select by split") {
    const Dataset ds = small(6);
    const LabelledView v = labelled_view(ds, Split::test);
    CHECK(v.features.rows() == v.labels.size());
    for (std::size_t i = 0; i < v.labels.size(); ++i) {
        CHECK(ds.samples[v.sample_index[i]].split == Split::test);
        CHECK(ds.samples[v.sample_index[i]].y == v.labels[i]);
    }
    CHECK(unlabelled_features(ds, Split::train).rows() == labelled_view(ds, Split::train).labels.size());
}

TEST_CASE("zero noise collapses each class onto its mean") {
    BlobConfig cfg;
    cfg.hidden_classes = 3;
    cfg.per_class = 20;
    cfg.d_in = 5;
    cfg.noise = 0.0;
    const Dataset ds = generate_blobs(cfg);
    std::map<int, std::vector<double>> first;
    std::map<int, int> histogram;
    for (const auto& s : ds.samples) {
        ++histogram[s.hidden_class];
        auto [it, fresh] = first.emplace(s.hidden_class, s.features);
        if (!fresh) CHECK(s.features == it->second);
    }
    CHECK(histogram == std::map<int, int>{{0, 20}, {1, 20}, {2, 20}});
}

TEST_CASE("very separated blobs are recovered by k-means") {
    BlobConfig cfg;
    cfg.hidden_classes = 4;
    cfg.per_class = 25;
    cfg.d_in = 6;
    cfg.separation = 12.0;
    cfg.noise = 1.0;
    const Dataset ds = generate_blobs(cfg);
    const KMeansResult km = kmeans(unlabelled_features(ds, Split::none), 4, 1);
    std::map<int, std::set<int>> clusters_of_class;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) clusters_of_class[ds.samples[i].hidden_class].insert(km.labels[i]);
    std::set<int> used;
    for (const auto& [cls, clusters] : clusters_of_class) {
        CHECK(clusters.size() == 1);
        used.insert(*clusters.begin());
    }
    CHECK(used.size() == 4);
}

TEST_CASE("downstream label corner cases") {
    const Dataset base = generate_blobs(BlobConfig{});
    const Dataset one = assign_downstream_labels(base, {0});
    std::size_t positives = 0;
    for (const auto& s : one.samples) {
        CHECK(s.y == (s.hidden_class == 0 ? 1 : 0));
        positives += static_cast<std::size_t>(s.y);
    }
    CHECK(positives == 40);
    const Dataset most = assign_downstream_labels(base, {1, 2, 3, 4, 5, 6, 7});
    for (const auto& s : most.samples) CHECK(s.y == (s.hidden_class == 0 ? 0 : 1));
}

TEST_CASE("117 groups split exactly 45/13/59") {
    BlobConfig cfg;
    cfg.hidden_classes = 9;
    cfg.per_class = 26;
    cfg.d_in = 9;
    const Dataset ds = split_groupwise(generate_blobs(cfg), {45.0 / 117, 13.0 / 117, 59.0 / 117}, 5);
    std::map<Split, std::set<std::int64_t>> groups;
    for (const auto& s : ds.samples) groups[s.split].insert(s.group_id);
    CHECK(groups[Split::train].size() == 45);
    CHECK(groups[Split::val].size() == 13);
    CHECK(groups[Split::test].size() == 59);
}

TEST_CASE("row layout of a three-sample file") {
    Dataset ds;
    ds.manifest.sample_count = 3;
    ds.manifest.d_in = 2;
    ds.manifest.hidden_classes = 2;
    ds.samples = {{{0.5, -1.0}, 0, 1, 1, Split::train}, {{0.25, 2.0}, 0, 1, 1, Split::train}, {{3.0, 0.0}, 1, 0, 0, Split::test}};
    std::ostringstream out;
    write_dataset(out, ds);
    std::istringstream lines(out.str());
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "utd-dataset,1,d_in=2");
    CHECK(rows[1] == "0,train,1,1,0.5,-1");
    CHECK(rows[3] == "1,test,0,0,3,0");
    std::istringstream in(out.str());
    CHECK(read_dataset(in, ds.manifest, "d") == ds);
}

TEST_CASE("empty and larger datasets round trip") {
    Dataset empty;
    empty.manifest.d_in = 4;
    std::ostringstream out;
    write_dataset(out, empty);
    std::istringstream in(out.str());
    CHECK(read_dataset(in, empty.manifest, "empty") == empty);

    BlobConfig cfg;
    cfg.hidden_classes = 5;
    cfg.per_class = 100;
    cfg.d_in = 7;
    const Dataset big = split_groupwise(assign_downstream_labels(generate_blobs(cfg), {1, 3}), {0.5, 0.2, 0.3}, 2);
    REQUIRE(big.samples.size() == 500);
    std::ostringstream big_out;
    write_dataset(big_out, big);
    std::istringstream big_in(big_out.str());
    CHECK(read_dataset(big_in, big.manifest, "big") == big);
}

TEST_CASE("default benchmark blobs are imperfectly clustered by raw k-means") {
    BlobConfig cfg;
    cfg.separation = 5.0;
    cfg.seed = 7;
    const Dataset ds = generate_blobs(cfg);
    const KMeansResult km = kmeans(unlabelled_features(ds, Split::none), cfg.hidden_classes, 0);
    // accuracy under the best one-to-one matching of clusters to classes
    std::vector<std::vector<int>> counts(8, std::vector<int>(8, 0));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) ++counts[km.labels[i]][ds.samples[i].hidden_class];
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int hit = 0;
        for (int c = 0; c < 8; ++c) hit += counts[c][perm[c]];
        best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double acc = static_cast<double>(best) / static_cast<double>(ds.samples.size());
    CHECK(acc >= 0.7);
    CHECK(acc <= 0.9);
}
