#pragma once

#include "tabncd/nn.hpp"

#include <string>

namespace tabncd::checkpoint {

// Versioned binary layout, little-endian, doubles written verbatim so
// parameters round-trip bit-exactly.
inline constexpr std::uint32_t kFormatVersion = 1;

struct JointArtifacts {
    nn::DenseNetwork encoder;
    nn::DenseNetwork classif_head;
    nn::DenseNetwork cluster_head;
    int n_known = 0;
    int n_unknown = 0;
};

void save_encoder(const std::string& path, const nn::DenseNetwork& encoder);
nn::DenseNetwork load_encoder(const std::string& path);

void save_joint(const std::string& path, const JointArtifacts& artifacts);
JointArtifacts load_joint(const std::string& path);

// True when the file carries a joint-model payload (encoder plus both heads).
bool is_joint_checkpoint(const std::string& path);

}  // namespace tabncd::checkpoint
