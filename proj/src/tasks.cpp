#include "utd/tasks.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace utd {
namespace {

constexpr std::size_t kMaxTaskK = 40;  // 3^K stays below 2^64

bool shortlex_less(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t r) {
    if (r > n) return 0;
    r = std::min(r, n - r);
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= r; ++i) result = result * (n - r + i) / i;
    return result;
}

void check_k(std::size_t k) {
    if (k < 2) throw InvalidArgument("task design needs K >= 2, got " + std::to_string(k));
    if (k > kMaxTaskK) throw InvalidArgument("K = " + std::to_string(k) + " is too large to enumerate");
}

}  // namespace

TaskSpec make_task(std::vector<int> a, std::vector<int> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.empty() || b.empty()) throw InvalidArgument("task subsets must be nonempty");
    if (std::adjacent_find(a.begin(), a.end()) != a.end() ||
        std::adjacent_find(b.begin(), b.end()) != b.end()) {
        throw InvalidArgument("task subset lists a pseudo-class twice");
    }
    std::vector<int> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    if (!common.empty()) throw InvalidArgument("task subsets must be disjoint");
    if (shortlex_less(b, a)) std::swap(a, b);
    return TaskSpec{std::move(a), std::move(b)};
}

bool is_canonical(const TaskSpec& task) {
    if (task.class0.empty() || task.class1.empty()) return false;
    if (!std::is_sorted(task.class0.begin(), task.class0.end()) ||
        !std::is_sorted(task.class1.begin(), task.class1.end())) {
        return false;
    }
    std::vector<int> common;
    std::set_intersection(task.class0.begin(), task.class0.end(), task.class1.begin(),
                          task.class1.end(), std::back_inserter(common));
    return common.empty() && shortlex_less(task.class0, task.class1);
}

std::uint64_t count_tasks(std::size_t k) {
    check_k(k);
    const std::uint64_t n = k;
    std::uint64_t total = 0;
    for (std::uint64_t i = 1; i <= n - 1; ++i) {
        for (std::uint64_t j = 1; j <= std::min(i, n - i); ++j) {
            const std::uint64_t ordered = binomial(n, i) * binomial(n - i, j);
            total += (i == j) ? ordered / 2 : ordered;
        }
    }
    return total;
}

TaskCatalog enumerate_tasks(std::size_t k) {
    check_k(k);
    if (k > 16) throw InvalidArgument("enumerating tasks for K > 16 is not supported");
    // every element goes to neither side, class a or class b: walk the 3^K codes
    std::uint64_t codes = 1;
    for (std::size_t i = 0; i < k; ++i) codes *= 3;
    std::set<TaskSpec> unique;
    for (std::uint64_t code = 0; code < codes; ++code) {
        std::vector<int> a, b;
        std::uint64_t c = code;
        for (std::size_t e = 0; e < k; ++e, c /= 3) {
            if (c % 3 == 1) a.push_back(static_cast<int>(e));
            if (c % 3 == 2) b.push_back(static_cast<int>(e));
        }
        if (a.empty() || b.empty()) continue;
        unique.insert(make_task(std::move(a), std::move(b)));
    }
    TaskCatalog catalog{k, {unique.begin(), unique.end()}};
    std::stable_sort(catalog.tasks.begin(), catalog.tasks.end(), [](const TaskSpec& x, const TaskSpec& y) {
        if (x.class0.size() != y.class0.size()) return x.class0.size() < y.class0.size();
        if (x.class1.size() != y.class1.size()) return x.class1.size() < y.class1.size();
        return x < y;
    });
    return catalog;
}

std::string format_task(const TaskSpec& task) {
    std::ostringstream out;
    for (std::size_t i = 0; i < task.class0.size(); ++i) out << (i ? " " : "") << task.class0[i];
    out << " |";
    for (int c : task.class1) out << ' ' << c;
    return out.str();
}

void write_catalog(std::ostream& out, const TaskCatalog& catalog) {
    for (const auto& task : catalog.tasks) out << format_task(task) << '\n';
}

TaskCatalog read_catalog(std::istream& in, const std::string& source) {
    TaskCatalog catalog;
    std::string line;
    std::size_t lineno = 0;
    int largest = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto bar = line.find('|');
        if (bar == std::string::npos) throw ParseError(source, lineno, "missing '|' separator");
        auto parse_side = [&](const std::string& text) {
            std::istringstream side(text);
            std::vector<int> ids;
            std::string token;
            while (side >> token) {
                std::size_t used = 0;
                int value = -1;
                try {
                    value = std::stoi(token, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != token.size() || value < 0) {
                    throw ParseError(source, lineno, "bad pseudo-class index '" + token + "'");
                }
                ids.push_back(value);
                largest = std::max(largest, value);
            }
            return ids;
        };
        auto a = parse_side(line.substr(0, bar));
        auto b = parse_side(line.substr(bar + 1));
        try {
            TaskSpec task = make_task(a, b);
            if (!(task.class0 == a && task.class1 == b)) {
                throw ParseError(source, lineno, "task is not in canonical form");
            }
            catalog.tasks.push_back(std::move(task));
        } catch (const InvalidArgument& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    catalog.k = static_cast<std::size_t>(largest + 1);
    return catalog;
}

std::size_t TaskPool::count(int label) const {
    return static_cast<std::size_t>(std::count_if(
        members.begin(), members.end(), [label](const LabelledRef& r) { return r.label == label; }));
}

TaskPool materialize_task(const TaskSpec& task, std::span<const int> pseudo_labels, std::size_t k) {
    std::vector<int> side(k, -1);
    auto mark = [&](const std::vector<int>& subset, int label) {
        for (int c : subset) {
            if (c < 0 || static_cast<std::size_t>(c) >= k) {
                throw InvalidArgument("task names pseudo-class " + std::to_string(c) +
                                      " outside [0, " + std::to_string(k) + ")");
            }
            side[static_cast<std::size_t>(c)] = label;
        }
    };
    mark(task.class0, 0);
    mark(task.class1, 1);
    TaskPool pool;
    for (std::size_t i = 0; i < pseudo_labels.size(); ++i) {
        const int c = pseudo_labels[i];
        if (c < 0 || static_cast<std::size_t>(c) >= k) throw InvalidArgument("pseudo-label out of range");
        if (side[static_cast<std::size_t>(c)] >= 0) pool.members.push_back({i, side[static_cast<std::size_t>(c)]});
    }
    if (pool.count(0) == 0 || pool.count(1) == 0) {
        throw EmptyClassError("task " + format_task(task) + " has an empty side");
    }
    return pool;
}

TaskPool materialize_task(const TaskSpec& task, const ClusterModel& model) {
    return materialize_task(task, model.pseudo_labels, model.k);
}

Episode sample_episode(const TaskPool& pool, std::size_t m, std::size_t n, std::uint64_t seed) {
    if (m < 2 || n < 2) throw InvalidArgument("support and query need at least 2 samples each");
    if (m >= n) throw InvalidArgument("support size must be smaller than query size");
    if (m + n > pool.members.size()) {
        throw InvalidArgument("pool of " + std::to_string(pool.members.size()) +
                              " cannot supply " + std::to_string(m + n) + " samples");
    }
    std::mt19937_64 rng(seed);
    std::vector<LabelledRef> by_class[2];
    for (const auto& r : pool.members) by_class[r.label == 0 ? 0 : 1].push_back(r);
    for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

    // per-class targets: class 1 gets the floor of each half
    std::size_t support_n[2] = {m - m / 2, m / 2};
    std::size_t query_n[2] = {n - n / 2, n / 2};
    for (int c = 0; c < 2; ++c) {
        const std::size_t have = by_class[c].size();
        if (have >= support_n[c] + query_n[c]) continue;
        // short class: keep support as balanced as possible, leave at least one for query
        const std::size_t s = std::min(support_n[c], have >= 2 ? have - 1 : have);
        support_n[c] = s;
        query_n[c] = have - s;
        support_n[1 - c] = m - support_n[c];
        query_n[1 - c] = n - query_n[c];
        break;
    }

    Episode episode;
    for (int c = 0; c < 2; ++c) {
        const auto& members = by_class[c];
        episode.support.insert(episode.support.end(), members.begin(),
                               members.begin() + static_cast<std::ptrdiff_t>(support_n[c]));
        episode.query.insert(episode.query.end(),
                             members.begin() + static_cast<std::ptrdiff_t>(support_n[c]),
                             members.begin() + static_cast<std::ptrdiff_t>(support_n[c] + query_n[c]));
    }
    return episode;
}

}  // namespace utd
