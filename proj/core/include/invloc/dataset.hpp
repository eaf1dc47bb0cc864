#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "invloc/common.hpp"
#include "invloc/image.hpp"

namespace invloc {

struct DatasetImage {
  ImageTensor image;
  std::string condition;
  FrameId frame = 0;
  std::filesystem::path source;
};

/// Condition-labelled image collection. Immutable once loaded.
struct MultiDomainDataset {
  std::filesystem::path root;
  std::vector<DatasetImage> images;
  /// condition -> ingested files, in frame order
  std::map<std::string, std::vector<std::string>> manifest;

  std::vector<std::string> conditions() const;
  bool has_condition(const std::string& condition) const;
  /// Indices into `images` for one condition, sorted by frame id.
  std::vector<std::size_t> indices_of(const std::string& condition) const;
  const DatasetImage* find(const std::string& condition, FrameId frame) const;
};

enum class DirectoryLayout { flat, per_condition };

/// Loads every decodable image below `root`.
///
/// `per_condition` expects one subdirectory per condition; `flat` treats the
/// directory itself as a single condition named after it. Frame ids come from
/// the digits in each file stem (position in sorted order when there are none).
/// Undecodable files are skipped with a warning; a condition left empty is fatal.
MultiDomainDataset load_image_dir(const std::filesystem::path& root,
                                  DirectoryLayout layout, int target_size);

/// `<parent>/<root name>.manifest.json`
std::filesystem::path manifest_path(const std::filesystem::path& root);
void write_manifest(const MultiDomainDataset& dataset);

enum class Domain { A, B };

struct ConditionLabel {
  std::string name;
  Domain domain = Domain::A;
  int subdomain = 0;  // 1..M_dom for domain A, 0 for B
};

struct DomainStream {
  ConditionLabel label;
  std::vector<std::size_t> indices;  // into dataset->images
};

struct DomainSplit {
  std::shared_ptr<const MultiDomainDataset> dataset;
  std::vector<DomainStream> domain_a;
  DomainStream domain_b;

  std::size_t subdomain_count() const { return domain_a.size(); }
  /// All A images pooled across subdomains.
  std::vector<std::size_t> pooled_a() const;
  const ImageTensor& image(std::size_t index) const { return dataset->images.at(index).image; }
};

DomainSplit split_domains(std::shared_ptr<const MultiDomainDataset> dataset,
                          const std::vector<std::string>& a_conditions,
                          const std::string& b_condition);

enum class SubsetMode { contiguous, strided };

/// Positions of a `count`-element query/database subset out of `available`.
/// contiguous: offset, offset+1, ...; strided: evenly spaced over the whole range.
std::vector<std::size_t> select_subset(std::size_t available, std::size_t count,
                                       SubsetMode mode, std::size_t offset = 0);

}  // namespace invloc
