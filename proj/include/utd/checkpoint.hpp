#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "utd/clustering.hpp"
#include "utd/matrix.hpp"
#include "utd/nn.hpp"

namespace utd {

inline constexpr int kCheckpointVersion = 1;

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string revision;
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Generic on-disk model: a kind tag, scalar attributes and named tensors.
/// Reals are written with 17 significant digits, so a round trip is exact.
struct Checkpoint {
    int version = kCheckpointVersion;
    std::string kind;
    Provenance provenance;
    std::map<std::string, std::string> scalars;
    std::map<std::string, RealMatrix> tensors;
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<checkpoint>");

/// Atomic write (temporary file then rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Revision string baked in at build time.
std::string build_revision();

Checkpoint to_checkpoint(const ClusterModel& model, const Provenance& provenance);
Checkpoint to_checkpoint(const Network& net, const std::string& kind, const Provenance& provenance);

ClusterModel cluster_model_from(const Checkpoint& ckpt);
/// Accepts any kind that stores a full network ("meta_model", "network").
Network network_from(const Checkpoint& ckpt);

}  // namespace utd
