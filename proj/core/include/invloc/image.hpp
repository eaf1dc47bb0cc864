#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace invloc {

/// Row-major H×W×C image with values in [-1, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Linear maps between 8-bit pixel levels and the [-1, 1] model range.
inline float normalize_pixel(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }
std::uint8_t denormalize_pixel(float v);

/// Bilinear resize, pixel-centre sampling (corners not aligned).
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);

/// Decodes an image file to RGB, resizes to size×size and normalizes to [-1, 1].
/// Throws invloc::Error when the file cannot be decoded.
ImageTensor read_image(const std::filesystem::path& path, int size);

/// Writes an RGB or single-channel image as lossless PNG.
void write_png(const ImageTensor& image, const std::filesystem::path& path);

/// Snaps every value to the nearest 8-bit level (what a PNG round trip yields).
void quantize_to_8bit(ImageTensor& image);

}  // namespace invloc
