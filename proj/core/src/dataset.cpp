#include "invloc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

namespace invloc {
namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> kExtensions = {".png", ".jpg", ".jpeg", ".bmp",
                                                    ".ppm", ".tif", ".tiff"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return kExtensions.contains(ext);
}

std::optional<FrameId> frame_from_stem(const std::string& stem) {
  std::string digits;
  for (char c : stem)
    if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
  if (digits.empty() || digits.size() > 18) return std::nullopt;
  return std::stoll(digits);
}

void load_condition(const fs::path& dir, const std::string& condition, int target_size,
                    MultiDomainDataset& ds) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<DatasetImage> loaded;
  for (std::size_t pos = 0; pos < files.size(); ++pos) {
    DatasetImage item;
    try {
      item.image = read_image(files[pos], target_size);
    } catch (const Error& e) {
      warn(std::string("skipping ") + e.what());
      continue;
    }
    item.condition = condition;
    item.frame = frame_from_stem(files[pos].stem().string()).value_or(static_cast<FrameId>(pos));
    item.source = files[pos];
    loaded.push_back(std::move(item));
  }
  if (loaded.empty()) throw Error("condition '" + condition + "' has no decodable images in " +
                                  dir.string());

  std::sort(loaded.begin(), loaded.end(),
            [](const DatasetImage& a, const DatasetImage& b) { return a.frame < b.frame; });
  for (std::size_t i = 1; i < loaded.size(); ++i)
    if (loaded[i].frame == loaded[i - 1].frame)
      throw Error("duplicate frame id " + std::to_string(loaded[i].frame) + " in condition '" +
                  condition + "'");

  auto& files_out = ds.manifest[condition];
  for (auto& item : loaded) {
    files_out.push_back(fs::relative(item.source, ds.root).generic_string());
    ds.images.push_back(std::move(item));
  }
}

}  // namespace

std::vector<std::string> MultiDomainDataset::conditions() const {
  std::vector<std::string> out;
  for (const auto& [name, files] : manifest) out.push_back(name);
  return out;
}

bool MultiDomainDataset::has_condition(const std::string& condition) const {
  return manifest.contains(condition);
}

std::vector<std::size_t> MultiDomainDataset::indices_of(const std::string& condition) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (images[i].condition == condition) out.push_back(i);
  std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
    return images[a].frame < images[b].frame;
  });
  return out;
}

const DatasetImage* MultiDomainDataset::find(const std::string& condition, FrameId frame) const {
  for (const auto& img : images)
    if (img.condition == condition && img.frame == frame) return &img;
  return nullptr;
}

MultiDomainDataset load_image_dir(const fs::path& root, DirectoryLayout layout,
                                  int target_size) {
  if (!fs::is_directory(root)) throw Error("dataset root does not exist: " + root.string());
  if (target_size <= 0) throw Error("target size must be positive");

  MultiDomainDataset ds;
  ds.root = root;
  if (layout == DirectoryLayout::flat) {
    std::string name = fs::path(root).lexically_normal().filename().string();
    if (name.empty()) name = fs::path(root).lexically_normal().parent_path().filename().string();
    load_condition(root, name, target_size, ds);
  } else {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw Error("no condition subdirectories in " + root.string());
    for (const auto& dir : dirs) load_condition(dir, dir.filename().string(), target_size, ds);
  }
  return ds;
}

fs::path manifest_path(const fs::path& root) {
  fs::path norm = root.lexically_normal();
  if (norm.filename().empty()) norm = norm.parent_path();
  return norm.parent_path() / (norm.filename().string() + ".manifest.json");
}

void write_manifest(const MultiDomainDataset& dataset) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [condition, files] : dataset.manifest) j[condition] = files;
  const fs::path path = manifest_path(dataset.root);
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::size_t> DomainSplit::pooled_a() const {
  std::vector<std::size_t> out;
  for (const auto& stream : domain_a) out.insert(out.end(), stream.indices.begin(), stream.indices.end());
  return out;
}

DomainSplit split_domains(std::shared_ptr<const MultiDomainDataset> dataset,
                          const std::vector<std::string>& a_conditions,
                          const std::string& b_condition) {
  if (!dataset) throw Error("split_domains: null dataset");
  if (a_conditions.empty()) throw Error("split_domains: domain A needs at least one condition");
  std::set<std::string> seen;
  for (const auto& name : a_conditions) {
    if (!seen.insert(name).second) throw Error("condition listed twice in domain A: " + name);
    if (name == b_condition)
      throw Error("condition '" + name + "' assigned to both domain A and domain B");
  }

  DomainSplit split;
  split.dataset = dataset;
  for (const auto& name : a_conditions) {
    if (!dataset->has_condition(name)) throw Error("unknown condition: " + name);
    DomainStream stream;
    stream.label = {name, Domain::A, static_cast<int>(split.domain_a.size()) + 1};
    stream.indices = dataset->indices_of(name);
    split.domain_a.push_back(std::move(stream));
  }
  if (!dataset->has_condition(b_condition)) throw Error("unknown condition: " + b_condition);
  split.domain_b.label = {b_condition, Domain::B, 0};
  split.domain_b.indices = dataset->indices_of(b_condition);
  return split;
}

std::vector<std::size_t> select_subset(std::size_t available, std::size_t count,
                                       SubsetMode mode, std::size_t offset) {
  if (count == 0 || count > available)
    throw Error("subset of " + std::to_string(count) + " out of " + std::to_string(available) +
                " frames is not possible");
  std::vector<std::size_t> out(count);
  if (mode == SubsetMode::contiguous) {
    if (offset + count > available) throw Error("contiguous subset runs past the sequence end");
    for (std::size_t i = 0; i < count; ++i) out[i] = offset + i;
  } else {
    for (std::size_t i = 0; i < count; ++i)
      out[i] = count == 1 ? 0 : (i * (available - 1)) / (count - 1);
  }
  return out;
}

}  // namespace invloc
