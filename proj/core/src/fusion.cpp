#include "invloc/fusion.hpp"

#include <atomic>
#include <cstring>
#include <fstream>
#include <set>
#include <thread>

namespace invloc {
namespace fs = std::filesystem;

namespace {
constexpr char kMapMagic[8] = {'I', 'N', 'V', 'L', 'F', 'M', 'A', 'P'};
}

FusionMap fuse(const torch::Tensor& activation, FusionMode mode) {
  torch::Tensor act = activation.detach();
  if (act.dim() == 4) {
    if (act.size(0) != 1) throw Error("fuse expects a single activation");
    act = act.squeeze(0);
  }
  if (act.dim() != 3 || act.size(0) < 1) throw Error("fuse expects an M×a×b activation with M >= 1");
  torch::Tensor summed = act.sum(0);
  if (mode == FusionMode::mean) summed = summed / static_cast<double>(act.size(0));
  summed = summed.to(torch::kFloat32).contiguous();
  FusionMap map;
  map.height = static_cast<int>(summed.size(0));
  map.width = static_cast<int>(summed.size(1));
  map.data.assign(summed.data_ptr<float>(), summed.data_ptr<float>() + summed.numel());
  return map;
}

FusionMap extract(Generator& g_ab, const ImageTensor& image, const std::string& layer, FusionMode mode) {
  if (generator_layer_index(layer) < 0) throw Error("unknown generator layer '" + layer + "'");
  torch::NoGradGuard no_grad;
  const auto dtype = g_ab->parameters().front().scalar_type();
  auto acts = g_ab->activations(to_tensor(image).to(dtype), {layer});
  FusionMap map = fuse(acts.at(layer), mode);
  map.source_layer = layer;
  return map;
}

void write_map_file(const fs::path& path, std::uint32_t height, std::uint32_t width,
                    std::span<const float> values) {
  if (static_cast<std::size_t>(height) * width != values.size())
    throw Error("map file: dimensions do not match value count");
  ensure_parent_dir(path);
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = path.string() + ".tmp" + std::to_string(counter++) + "_" +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMapMagic, sizeof(kMapMagic));
    out.write(reinterpret_cast<const char*>(&height), sizeof(height));
    out.write(reinterpret_cast<const char*>(&width), sizeof(width));
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

MapFile read_map_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open map file " + path.string());
  char magic[8];
  MapFile mf;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&mf.height), sizeof(mf.height));
  in.read(reinterpret_cast<char*>(&mf.width), sizeof(mf.width));
  if (!in || std::memcmp(magic, kMapMagic, sizeof(magic)) != 0)
    throw Error(path.string() + ": not a map file");
  mf.values.resize(static_cast<std::size_t>(mf.height) * mf.width);
  in.read(reinterpret_cast<char*>(mf.values.data()), static_cast<std::streamsize>(mf.values.size() * sizeof(float)));
  if (!in || in.peek() != std::char_traits<char>::eof()) throw Error(path.string() + ": truncated map file");
  return mf;
}

FusionCache::FusionCache(fs::path root, std::string checkpoint_hash)
    : root_(std::move(root)), hash_(std::move(checkpoint_hash)) {}

fs::path FusionCache::entry_path(const std::string& layer, const std::string& condition, FrameId frame) const {
  return root_ / hash_ / layer / (condition + "_" + std::to_string(frame) + ".fmap");
}

std::optional<FusionMap> FusionCache::load(const std::string& layer, const std::string& condition,
                                           FrameId frame) const {
  const fs::path p = entry_path(layer, condition, frame);
  if (!fs::exists(p)) return std::nullopt;
  MapFile mf = read_map_file(p);
  FusionMap map;
  map.height = static_cast<int>(mf.height);
  map.width = static_cast<int>(mf.width);
  map.data = std::move(mf.values);
  map.source_layer = layer;
  map.source_frame = frame;
  map.source_checkpoint = hash_;
  return map;
}

void FusionCache::store(const FusionMap& map, const std::string& condition) const {
  write_map_file(entry_path(map.source_layer, condition, map.source_frame), static_cast<std::uint32_t>(map.height),
                 static_cast<std::uint32_t>(map.width), map.data);
}

std::map<std::string, std::vector<FusionMap>> extract_layers(Generator& g_ab, std::span<const FrameRef> frames,
                                                             const std::vector<std::string>& layers,
                                                             const std::string& checkpoint_hash,
                                                             const FusionCache* cache) {
  for (const auto& layer : layers)
    if (generator_layer_index(layer) < 0) throw Error("unknown generator layer '" + layer + "'");
  std::map<std::string, std::vector<FusionMap>> out;
  for (const auto& layer : layers) out[layer].resize(frames.size());
  torch::NoGradGuard no_grad;
  const auto dtype = g_ab->parameters().front().scalar_type();

  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::set<std::string> missing;
    for (const auto& layer : layers) {
      std::optional<FusionMap> hit;
      if (cache) hit = cache->load(layer, frames[i].condition, frames[i].frame);
      if (hit) out[layer][i] = std::move(*hit);
      else missing.insert(layer);
    }
    if (missing.empty()) continue;
    auto acts = g_ab->activations(to_tensor(*frames[i].image).to(dtype), missing);
    for (const auto& layer : missing) {
      FusionMap map = fuse(acts.at(layer));
      map.source_layer = layer;
      map.source_frame = frames[i].frame;
      map.source_checkpoint = checkpoint_hash;
      if (cache) cache->store(map, frames[i].condition);
      out[layer][i] = std::move(map);
    }
  }
  return out;
}

}  // namespace invloc
