#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace invloc {

/// Fatal error raised by every module; the CLI maps it to a non-zero exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using FrameId = std::int64_t;

/// Creates the parent directory of `path` if needed; throws Error on failure.
void ensure_parent_dir(const std::filesystem::path& path);

// Non-fatal diagnostics. Warnings go to stderr unless a sink is installed.
void warn(std::string_view message);
std::size_t warning_count();
void set_warning_sink(std::function<void(std::string_view)> sink);

std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text,
                      std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::uint64_t splitmix64(std::uint64_t x);

/// Independent seed for a named component, derived from the run seed.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);

}  // namespace invloc
