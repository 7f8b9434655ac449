#include "utd/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "utd/io.hpp"

#ifndef UTD_REVISION
#define UTD_REVISION "unknown"
#endif

namespace utd {
namespace {

constexpr const char* kMagic = "utd-checkpoint";

void put_encoder(Checkpoint& c, const std::string& prefix, const EncoderParams& e) {
    c.scalars[prefix + ".input_dim"] = std::to_string(e.input_dim);
    c.scalars[prefix + ".layers"] = std::to_string(e.layers.size());
    for (std::size_t l = 0; l < e.layers.size(); ++l) {
        const std::string p = prefix + "." + std::to_string(l);
        c.tensors[p + ".weight"] = e.layers[l].weight;
        c.tensors[p + ".bias"] = RealMatrix(1, e.layers[l].bias.size(), e.layers[l].bias);
    }
}

const std::string& scalar(const Checkpoint& c, const std::string& key) {
    auto it = c.scalars.find(key);
    if (it == c.scalars.end()) throw IoError("checkpoint lacks scalar '" + key + "'");
    return it->second;
}

const RealMatrix& tensor(const Checkpoint& c, const std::string& key) {
    auto it = c.tensors.find(key);
    if (it == c.tensors.end()) throw IoError("checkpoint lacks tensor '" + key + "'");
    return it->second;
}

template <typename T>
T to_number(const std::string& text, const std::string& what) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw IoError("bad value for " + what + ": '" + text + "'");
    return value;
}

EncoderParams get_encoder(const Checkpoint& c, const std::string& prefix) {
    EncoderParams e;
    e.input_dim = to_number<std::size_t>(scalar(c, prefix + ".input_dim"), prefix);
    const auto layers = to_number<std::size_t>(scalar(c, prefix + ".layers"), prefix);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = prefix + "." + std::to_string(l);
        e.layers.push_back({tensor(c, p + ".weight"), tensor(c, p + ".bias").values()});
    }
    validate(e);
    return e;
}

void put_head(Checkpoint& c, const HeadParams& h) {
    c.tensors["head.weight"] = h.weight;
    c.tensors["head.bias"] = RealMatrix(1, h.bias.size(), h.bias);
}

HeadParams get_head(const Checkpoint& c) {
    HeadParams h{tensor(c, "head.weight"), tensor(c, "head.bias").values()};
    validate(h);
    return h;
}

RealMatrix row_of(const std::vector<double>& v) { return RealMatrix(1, v.size(), v); }

}  // namespace

std::string build_revision() { return UTD_REVISION; }

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
    out << kMagic << ' ' << c.version << '\n';
    out << "kind " << c.kind << '\n';
    out << "config_hash " << c.provenance.config_hash << '\n';
    out << "seed " << c.provenance.seed << '\n';
    out << "revision " << c.provenance.revision << '\n';
    for (const auto& [key, value] : c.scalars) out << "scalar " << key << ' ' << value << '\n';
    for (const auto& [name, m] : c.tensors) {
        out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t col = 0; col < m.cols(); ++col) out << (col ? " " : "") << format_real(m(r, col));
            out << '\n';
        }
    }
    out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
    Checkpoint c;
    std::string line;
    std::size_t lineno = 0;
    auto next = [&](const char* expecting) {
        if (!std::getline(in, line)) throw ParseError(source, lineno + 1, std::string("unexpected end, expecting ") + expecting);
        ++lineno;
    };
    auto field = [&](const std::string& key) {
        next(key.c_str());
        if (line.rfind(key + " ", 0) != 0) throw ParseError(source, lineno, "expected '" + key + "'");
        return line.substr(key.size() + 1);
    };

    next("header");
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    if (!(header >> magic >> version) || magic != kMagic) throw ParseError(source, lineno, "not a checkpoint");
    if (version != kCheckpointVersion) {
        throw ParseError(source, lineno, "checkpoint version " + std::to_string(version) + " is not supported");
    }
    c.version = version;
    c.kind = field("kind");
    c.provenance.config_hash = field("config_hash");
    try {
        c.provenance.seed = to_number<std::uint64_t>(field("seed"), "seed");
    } catch (const IoError& e) {
        throw ParseError(source, lineno, e.what());
    }
    c.provenance.revision = field("revision");

    while (true) {
        next("'end'");
        if (line == "end") break;
        std::istringstream words(line);
        std::string tag, name;
        words >> tag >> name;
        if (tag == "scalar") {
            std::string value;
            if (!(words >> value)) throw ParseError(source, lineno, "scalar without value");
            c.scalars[name] = value;
        } else if (tag == "tensor") {
            std::size_t rows = 0, cols = 0;
            if (!(words >> rows >> cols)) throw ParseError(source, lineno, "tensor header needs rows and cols");
            RealMatrix m(rows, cols);
            for (std::size_t r = 0; r < rows; ++r) {
                next("tensor row");
                std::istringstream values(line);
                std::string token;
                for (std::size_t col = 0; col < cols; ++col) {
                    if (!(values >> token)) throw ParseError(source, lineno, "tensor row too short");
                    double v = 0.0;
                    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
                    if (ec != std::errc() || ptr != token.data() + token.size()) {
                        throw ParseError(source, lineno, "bad number '" + token + "'");
                    }
                    m(r, col) = v;
                }
                if (values >> token) throw ParseError(source, lineno, "tensor row too long");
            }
            c.tensors[name] = std::move(m);
        } else {
            throw ParseError(source, lineno, "unknown record '" + tag + "'");
        }
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ostringstream out;
    write_checkpoint(out, ckpt);
    write_file_atomic(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return read_checkpoint(in, path.string());
}

Checkpoint to_checkpoint(const ClusterModel& model, const Provenance& provenance) {
    Checkpoint c;
    c.kind = "cluster_model";
    c.provenance = provenance;
    put_encoder(c, "encoder", model.theta);
    put_head(c, model.omega);
    c.tensors["centroids"] = model.centroids.matrix;
    std::vector<double> labels(model.pseudo_labels.begin(), model.pseudo_labels.end());
    c.tensors["pseudo_labels"] = row_of(labels);
    c.tensors["round_kappas"] = row_of(model.round_kappas);
    c.scalars["kappa"] = format_real(model.kappa);
    c.scalars["k"] = std::to_string(model.k);
    c.scalars["selected_round"] = std::to_string(model.selected_round);
    return c;
}

Checkpoint to_checkpoint(const Network& net, const std::string& kind, const Provenance& provenance) {
    Checkpoint c;
    c.kind = kind;
    c.provenance = provenance;
    put_encoder(c, "encoder", net.encoder);
    put_head(c, net.head);
    return c;
}

ClusterModel cluster_model_from(const Checkpoint& c) {
    if (c.kind != "cluster_model") throw IoError("expected a cluster_model checkpoint, found '" + c.kind + "'");
    ClusterModel m;
    m.theta = get_encoder(c, "encoder");
    m.omega = get_head(c);
    m.centroids.matrix = tensor(c, "centroids");
    for (double v : tensor(c, "pseudo_labels").values()) m.pseudo_labels.push_back(static_cast<int>(v));
    m.round_kappas = tensor(c, "round_kappas").values();
    m.kappa = to_number<double>(scalar(c, "kappa"), "kappa");
    m.k = to_number<std::size_t>(scalar(c, "k"), "k");
    m.selected_round = to_number<std::size_t>(scalar(c, "selected_round"), "selected_round");
    if (m.omega.num_classes() != m.k) throw IoError("cluster head width disagrees with K");
    return m;
}

Network network_from(const Checkpoint& c) {
    if (c.kind != "meta_model" && c.kind != "network") {
        throw IoError("expected a network checkpoint, found '" + c.kind + "'");
    }
    Network net{get_encoder(c, "encoder"), get_head(c)};
    if (net.head.feature_dim() != net.encoder.feature_dim()) throw IoError("head does not fit encoder");
    return net;
}

}  // namespace utd
