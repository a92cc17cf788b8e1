#include "tabncd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace tabncd::checkpoint {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'C', 'D'};
constexpr std::uint8_t kKindEncoder = 0;
constexpr std::uint8_t kKindJoint = 1;

template <class T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError("checkpoint: truncated file");
    return value;
}

void write_network(std::ostream& os, const nn::DenseNetwork& net) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(net.n_layers()));
    for (const auto& layer : net.layers()) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(layer.fan_in()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(layer.fan_out()));
        write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(layer.activation));
        write_pod<double>(os, layer.dropout_rate);
        os.write(reinterpret_cast<const char*>(layer.weights.data()),
                 static_cast<std::streamsize>(sizeof(double) * layer.weights.size()));
        os.write(reinterpret_cast<const char*>(layer.bias.data()),
                 static_cast<std::streamsize>(sizeof(double) * layer.bias.size()));
    }
}

nn::DenseNetwork read_network(std::istream& is) {
    const auto n_layers = read_pod<std::uint32_t>(is);
    std::vector<nn::DenseLayer> layers;
    layers.reserve(n_layers);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const auto fan_in = read_pod<std::uint32_t>(is);
        const auto fan_out = read_pod<std::uint32_t>(is);
        const auto act = read_pod<std::uint8_t>(is);
        if (act > static_cast<std::uint8_t>(nn::Activation::Identity))
            throw IoError("checkpoint: unknown activation code");
        nn::DenseLayer layer;
        layer.activation = static_cast<nn::Activation>(act);
        layer.dropout_rate = read_pod<double>(is);
        layer.weights.resize(fan_in, fan_out);
        is.read(reinterpret_cast<char*>(layer.weights.data()),
                static_cast<std::streamsize>(sizeof(double) * layer.weights.size()));
        layer.bias.resize(fan_out);
        is.read(reinterpret_cast<char*>(layer.bias.data()),
                static_cast<std::streamsize>(sizeof(double) * layer.bias.size()));
        if (!is) throw IoError("checkpoint: truncated file");
        layers.push_back(std::move(layer));
    }
    return nn::DenseNetwork(std::move(layers));
}

std::uint8_t read_header(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("checkpoint: bad magic, not a checkpoint file");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kFormatVersion) throw IoError("checkpoint: unsupported format version");
    return read_pod<std::uint8_t>(is);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot write " + path);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot read " + path);
    return is;
}

}  // namespace

void save_encoder(const std::string& path, const nn::DenseNetwork& encoder) {
    auto os = open_out(path);
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kFormatVersion);
    write_pod<std::uint8_t>(os, kKindEncoder);
    write_network(os, encoder);
    if (!os) throw IoError("checkpoint: write failed for " + path);
}

nn::DenseNetwork load_encoder(const std::string& path) {
    auto is = open_in(path);
    const auto kind = read_header(is);
    if (kind == kKindJoint) {
        // joint files still carry a leading encoder payload
        read_pod<std::uint32_t>(is);  // n_known
        read_pod<std::uint32_t>(is);  // n_unknown
        return read_network(is);
    }
    if (kind != kKindEncoder) throw IoError("checkpoint: unknown payload kind");
    return read_network(is);
}

void save_joint(const std::string& path, const JointArtifacts& artifacts) {
    auto os = open_out(path);
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kFormatVersion);
    write_pod<std::uint8_t>(os, kKindJoint);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(artifacts.n_known));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(artifacts.n_unknown));
    write_network(os, artifacts.encoder);
    write_network(os, artifacts.classif_head);
    write_network(os, artifacts.cluster_head);
    if (!os) throw IoError("checkpoint: write failed for " + path);
}

JointArtifacts load_joint(const std::string& path) {
    auto is = open_in(path);
    const auto kind = read_header(is);
    if (kind != kKindJoint) throw IoError("checkpoint: not a joint-model checkpoint");
    JointArtifacts art;
    art.n_known = static_cast<int>(read_pod<std::uint32_t>(is));
    art.n_unknown = static_cast<int>(read_pod<std::uint32_t>(is));
    art.encoder = read_network(is);
    art.classif_head = read_network(is);
    art.cluster_head = read_network(is);
    return art;
}

bool is_joint_checkpoint(const std::string& path) {
    auto is = open_in(path);
    return read_header(is) == kKindJoint;
}

}  // namespace tabncd::checkpoint
