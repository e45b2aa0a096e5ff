// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#include "pep/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pep/errors.hpp"

#ifndef PEP_BUILD_ID
#define PEP_BUILD_ID "unknown"
#endif

namespace pep {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string build_id() { return PEP_BUILD_ID; }

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const std::string& dir, const PepModel& model) {
  std::filesystem::create_directories(dir);
  std::string blob;
  json entries = json::array();
  for (const Parameter& p : model.store().parameters()) {
    const Tensor& v = p.var.value();
    const std::size_t nbytes = v.size() * sizeof(double);
    entries.push_back({{"name", p.name},
                       {"shape", v.shape()},
                       {"dtype", "f64"},
                       {"offset", blob.size()},
                       {"nbytes", nbytes}});
    blob.append(reinterpret_cast<const char*>(v.data()), nbytes);
  }
  {
    std::ofstream out(dir + "/params.bin", std::ios::binary);
    if (!out) throw IoError("cannot write " + dir + "/params.bin");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  json manifest{{"format_version", kCheckpointFormatVersion},
                {"build_id", build_id()},
                {"num_classes", model.config().model.num_classes},
                {"total_bytes", blob.size()},
                {"checksum_fnv1a", hex(fnv1a(blob.data(), blob.size()))},
                {"tensors", entries},
                {"config", json::parse(dump_config(model.config()))}};
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot write " + dir + "/manifest.json");
  out << manifest.dump(2) << '\n';
}

PepModel load_checkpoint(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw IoError("missing checkpoint manifest " + manifest_path);
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt checkpoint manifest " + manifest_path + ": " + e.what());
  }
  const std::string blob = read_file(dir + "/params.bin");
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw IntegrityError("unsupported checkpoint format version");
    }
    if (manifest.at("total_bytes").get<std::size_t>() != blob.size()) {
      throw IntegrityError("params.bin size " + std::to_string(blob.size()) + " disagrees with manifest");
    }
    if (manifest.at("checksum_fnv1a").get<std::string>() != hex(fnv1a(blob.data(), blob.size()))) {
      throw IntegrityError("params.bin checksum mismatch");
    }
    RunConfig config = parse_config(manifest.at("config").dump());
    if (manifest.at("num_classes").get<int>() != config.model.num_classes) {
      throw IntegrityError("num_classes disagrees with the config snapshot");
    }
    PepModel model(config, 0);
    const json& entries = manifest.at("tensors");
    auto& params = model.store().parameters();
    if (entries.size() != params.size()) {
      throw IntegrityError("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects " +
                           std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json& e = entries[i];
      Tensor& v = params[i].var.mutable_value();
      if (e.at("name").get<std::string>() != params[i].name || e.at("shape").get<Shape>() != v.shape() ||
          e.at("dtype").get<std::string>() != "f64") {
        throw IntegrityError("tensor entry " + std::to_string(i) + " does not match parameter " + params[i].name);
      }
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("nbytes").get<std::size_t>();
      if (nbytes != v.size() * sizeof(double) || offset + nbytes > blob.size()) {
        throw IntegrityError("tensor " + params[i].name + " lies outside params.bin");
      }
      std::memcpy(v.data(), blob.data() + offset, nbytes);
    }
    return model;
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt checkpoint manifest " + manifest_path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw IntegrityError(std::string("checkpoint config snapshot invalid: ") + e.what());
  }
}

void write_run_manifest(const std::string& path, const RunConfig& config, std::uint64_t seed,
                        std::uint64_t dataset_hash, const std::string& command) {
  json m{{"command", command},
         {"build_id", build_id()},
         {"seed", seed},
         {"dataset_hash", hex(dataset_hash)},
         {"config", json::parse(dump_config(config))}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << m.dump(2) << '\n';
}

}  // namespace pep
