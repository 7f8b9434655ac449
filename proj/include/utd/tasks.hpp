#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "utd/clustering.hpp"

namespace utd {

/// A binary task: samples in pseudo-classes `class0` are labelled 0, those
/// in `class1` labelled 1. Canonical form orders the two subsets by size,
/// then lexicographically, with the smaller one as class0, so a task and its
/// label swap share one representation.
struct TaskSpec {
    std::vector<int> class0;
    std::vector<int> class1;

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
    friend auto operator<=>(const TaskSpec&, const TaskSpec&) = default;
};

/// Canonical form of an arbitrary pair; throws if either side is empty or they overlap.
TaskSpec make_task(std::vector<int> a, std::vector<int> b);
bool is_canonical(const TaskSpec& task);

struct TaskCatalog {
    std::size_t k = 0;
    std::vector<TaskSpec> tasks;
    friend bool operator==(const TaskCatalog&, const TaskCatalog&) = default;
};

/// Number of unordered pairs of nonempty disjoint subsets of K pseudo-classes,
/// evaluated as the size-indexed double sum of binomial products.
std::uint64_t count_tasks(std::size_t k);

/// Every such pair once, ordered by (|class0|, |class1|) then lexicographically.
TaskCatalog enumerate_tasks(std::size_t k);

/// One line per task: "0 2 | 1".
void write_catalog(std::ostream& out, const TaskCatalog& catalog);
std::string format_task(const TaskSpec& task);
/// Inverse of write_catalog. K is taken as one more than the largest index.
TaskCatalog read_catalog(std::istream& in, const std::string& source = "<catalog>");

struct LabelledRef {
    std::size_t sample = 0;
    int label = 0;
    friend bool operator==(const LabelledRef&, const LabelledRef&) = default;
};

/// Samples of one task with their binary labels, in sample order.
struct TaskPool {
    std::vector<LabelledRef> members;
    std::size_t count(int label) const;
    friend bool operator==(const TaskPool&, const TaskPool&) = default;
};

TaskPool materialize_task(const TaskSpec& task, std::span<const int> pseudo_labels, std::size_t k);
TaskPool materialize_task(const TaskSpec& task, const ClusterModel& model);

struct Episode {
    std::vector<LabelledRef> support;
    std::vector<LabelledRef> query;
    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Support of size M and query of size N drawn without replacement. Each set
/// is split evenly between the labels when the pool allows; otherwise the
/// larger class makes up the difference.
Episode sample_episode(const TaskPool& pool, std::size_t m, std::size_t n, std::uint64_t seed);

}  // namespace utd
