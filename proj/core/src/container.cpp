#include "invloc/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "invloc/common.hpp"

namespace invloc {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "model containers are little-endian; big-endian hosts are not supported");

namespace {

constexpr char kMagic[8] = {'I', 'N', 'V', 'L', 'O', 'C', 'M', 'C'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const Blob& Container::blob(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return b;
  throw Error("container has no blob '" + name + "'");
}

bool Container::has_blob(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return true;
  return false;
}

void write_container(const Container& container, const fs::path& path) {
  nlohmann::json header;
  header["kind"] = container.kind;
  header["meta"] = container.meta;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& b : container.blobs) {
    if (element_count(b.shape) != static_cast<std::int64_t>(b.values.size()))
      throw Error("blob '" + b.name + "' shape does not match its value count");
    index.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.values.size()}});
    offset += b.values.size() * sizeof(float);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(b.values.data()),
                static_cast<uInt>(b.values.size() * sizeof(float)));
  }
  header["blobs"] = index;
  header["payload_bytes"] = offset;
  header["payload_crc32"] = static_cast<std::uint64_t>(crc);
  const std::string text = header.dump();

  ensure_parent_dir(path);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kContainerVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : container.blobs)
      out.write(reinterpret_cast<const char*>(b.values.data()),
                static_cast<std::streamsize>(b.values.size() * sizeof(float)));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Container read_container(const fs::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw Error(path.string() + ": not a model container (bad magic)");
  const auto version = read_pod<std::uint32_t>(in);
  if (!in) throw Error(path.string() + ": truncated header");
  if (version != kContainerVersion)
    throw Error(path.string() + ": container version " + std::to_string(version) +
                " does not match supported version " + std::to_string(kContainerVersion));
  const auto header_len = read_pod<std::uint64_t>(in);
  if (!in || header_len > (1ULL << 32)) throw Error(path.string() + ": corrupt header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw Error(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": corrupt header: " + e.what());
  }

  Container c;
  try {
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.at("meta");
    if (c.kind != expected_kind)
      throw Error(path.string() + ": holds a '" + c.kind + "' container, expected '" + expected_kind + "'");
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    const auto expected_crc = header.at("payload_crc32").get<std::uint64_t>();
    std::vector<char> payload(payload_bytes);
    in.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (!in || in.peek() != std::char_traits<char>::eof())
      throw Error(path.string() + ": payload size does not match header");
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
    if (crc != expected_crc) throw Error(path.string() + ": payload checksum mismatch");

    for (const auto& entry : header.at("blobs")) {
      Blob b;
      b.name = entry.at("name").get<std::string>();
      b.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (static_cast<std::uint64_t>(element_count(b.shape)) != count ||
          offset + count * sizeof(float) > payload_bytes)
        throw Error(path.string() + ": blob '" + b.name + "' out of range");
      b.values.resize(count);
      std::memcpy(b.values.data(), payload.data() + offset, count * sizeof(float));
      c.blobs.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": corrupt header: " + e.what());
  }
  return c;
}

}  // namespace invloc
