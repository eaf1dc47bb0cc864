#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "invloc/common.hpp"
#include "invloc/generator.hpp"
#include "invloc/image.hpp"

namespace invloc {

/// Single-channel map: the channel sum of one generator layer's activation.
struct FusionMap {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // row-major
  std::string source_layer;
  FrameId source_frame = -1;
  std::string source_checkpoint;

  float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
};

enum class FusionMode {
  sum,   // bare channel sum (default)
  mean,  // sum divided by the channel count; experimental
};

/// Collapses an M×a×b (or 1×M×a×b) activation over its channel axis.
FusionMap fuse(const torch::Tensor& activation, FusionMode mode = FusionMode::sum);

/// One image through G_AB up to `layer`, then fused. Throws on an unknown layer.
FusionMap extract(Generator& g_ab, const ImageTensor& image, const std::string& layer,
                  FusionMode mode = FusionMode::sum);

/// Binary map file: 8-byte magic "INVLFMAP", u32 height, u32 width, LE float32 payload.
struct MapFile {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;
};

void write_map_file(const std::filesystem::path& path, std::uint32_t height, std::uint32_t width,
                    std::span<const float> values);
MapFile read_map_file(const std::filesystem::path& path);

/// Disk cache of fusion maps keyed by (checkpoint hash, layer, condition, frame).
/// Entries are written to a temporary name and renamed, so concurrent writers
/// never expose partial files.
class FusionCache {
 public:
  FusionCache(std::filesystem::path root, std::string checkpoint_hash);

  std::filesystem::path entry_path(const std::string& layer, const std::string& condition,
                                   FrameId frame) const;
  std::optional<FusionMap> load(const std::string& layer, const std::string& condition, FrameId frame) const;
  void store(const FusionMap& map, const std::string& condition) const;
  const std::string& checkpoint_hash() const { return hash_; }

 private:
  std::filesystem::path root_;
  std::string hash_;
};

struct FrameRef {
  const ImageTensor* image = nullptr;
  FrameId frame = 0;
  std::string condition;
};

/// Fusion maps of several layers for a list of frames; one generator pass per
/// image. Result is indexed [layer][frame]. Uses the cache when given.
std::map<std::string, std::vector<FusionMap>> extract_layers(Generator& g_ab, std::span<const FrameRef> frames,
                                                             const std::vector<std::string>& layers,
                                                             const std::string& checkpoint_hash,
                                                             const FusionCache* cache = nullptr);

}  // namespace invloc
