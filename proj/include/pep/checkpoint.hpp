// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "pep/model.hpp"

namespace pep {

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes `dir/params.bin` (little-endian f64 blobs in registration order)
/// and `dir/manifest.json` (name, shape, offset and size per tensor, a
/// checksum of the blob file, and the run config).
void save_checkpoint(const std::string& dir, const PepModel& model);

/// Rebuilds the model from a checkpoint directory. Throws IntegrityError
/// when the manifest is malformed or disagrees with the blob file.
PepModel load_checkpoint(const std::string& dir);

/// Version string baked in at configure time ("unknown" outside a git tree).
std::string build_id();

/// Writes run_manifest.json: config snapshot, seed, build id and dataset hash.
void write_run_manifest(const std::string& path, const RunConfig& config, std::uint64_t seed,
                        std::uint64_t dataset_hash, const std::string& command);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 1469598103934665603ull);

}  // namespace pep
