#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace invloc {

/// Named float32 array stored in a model container.
struct Blob {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

/// Single-file model container:
///   8-byte magic "INVLOCMC", u32 format version, u64 header length,
///   JSON header, then little-endian float32 blobs back to back.
/// The header lists every blob (name, shape, offset, count) and a CRC-32 of
/// the payload, so truncation and corruption are detected on load.
struct Container {
  std::string kind;  // "cyclegan" or "pose_model"
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Blob> blobs;

  const Blob& blob(const std::string& name) const;
  bool has_blob(const std::string& name) const;
};

inline constexpr std::uint32_t kContainerVersion = 1;

/// Writes atomically (temporary file + rename).
void write_container(const Container& container, const std::filesystem::path& path);

/// Throws invloc::Error on a bad magic, version mismatch, wrong kind or corruption.
Container read_container(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace invloc
