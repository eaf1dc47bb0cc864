#include "invloc/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "invloc/common.hpp"

namespace invloc {

std::uint8_t denormalize_pixel(float v) {
  const float level = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(level);
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  ImageTensor out(height, width, image.channels);
  // cv::resize is limited to 4 channels, so resample planes one at a time.
  cv::Mat plane(image.height, image.width, CV_32F);
  cv::Mat resized;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      auto* row = plane.ptr<float>(y);
      for (int x = 0; x < image.width; ++x) row[x] = image.at(y, x, c);
    }
    cv::resize(plane, resized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    for (int y = 0; y < height; ++y) {
      const auto* row = resized.ptr<float>(y);
      for (int x = 0; x < width; ++x) out.at(y, x, c) = row[x];
    }
  }
  return out;
}

ImageTensor read_image(const std::filesystem::path& path, int size) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  ImageTensor image(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x)
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = normalize_pixel(row[x][c]);
  }
  return resize_bilinear(image, size, size);
}

void write_png(const ImageTensor& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3)
    throw Error("write_png: unsupported channel count " + std::to_string(image.channels));
  cv::Mat out(image.height, image.width, image.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < image.height; ++y) {
    auto* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      if (image.channels == 3) {
        // OpenCV stores BGR.
        row[3 * x + 0] = denormalize_pixel(image.at(y, x, 2));
        row[3 * x + 1] = denormalize_pixel(image.at(y, x, 1));
        row[3 * x + 2] = denormalize_pixel(image.at(y, x, 0));
      } else {
        row[x] = denormalize_pixel(image.at(y, x, 0));
      }
    }
  }
  ensure_parent_dir(path);
  if (!cv::imwrite(path.string(), out)) throw Error("cannot write image: " + path.string());
}

void quantize_to_8bit(ImageTensor& image) {
  for (float& v : image.data) v = normalize_pixel(denormalize_pixel(v));
}

}  // namespace invloc
