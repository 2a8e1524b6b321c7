#pragma once

// On-disk formats.
//
// Parameter blob: for each parameter in list order, a u64 rank, `rank` u64
// extents, then the values as f32; all little-endian. A sidecar manifest
// (`<blob>.manifest`) has one line per parameter: `name role extents`,
// extents joined by 'x'.
//
// Checkpoint: magic "NOBLECKP", u32 version, u64 step, u64 parameter count,
// then three parameter-blob sections: values, first moments, second moments.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "noble/optim.hpp"

namespace noble {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ManifestEntry {
  std::string name;
  RoleTag role = RoleTag::main_weight;
  Shape shape;
};

template <typename Real>
void save_parameters(const std::filesystem::path& blob, const ParameterList<Real>& params);

/// Loads values into existing tensors; names, roles and shapes must match.
template <typename Real>
void load_parameters(const std::filesystem::path& blob, ParameterList<Real>& params);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const AdamW<Real>& optimizer);

/// Restores parameter values and optimizer moments/step into `optimizer`.
template <typename Real>
void load_checkpoint(const std::filesystem::path& path, AdamW<Real>& optimizer);

}  // namespace noble
