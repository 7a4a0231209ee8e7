#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinface/caae/model.hpp"

namespace kinface::data {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline float to_unit_range(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline std::uint8_t from_unit_range(float v) {
  const float scaled = std::round((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

/// Converts an 8-bit RGB raster into a face image, scaling v / 127.5 - 1.
inline caae::FaceImage<float> face_from_rgb(const cv::Mat& rgb) {
  if (rgb.type() != CV_8UC3 || rgb.rows != rgb.cols) throw ImageError("expected a square 8-bit RGB raster");
  const std::size_t S = static_cast<std::size_t>(rgb.rows);
  caae::FaceImage<float> img{Tensor<float>({S, S, 3})};
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    for (int x = 0; x < rgb.cols * 3; ++x) img.pixels[static_cast<std::size_t>(y * rgb.cols * 3 + x)] = to_unit_range(row[x]);
  }
  return img;
}

inline cv::Mat rgb_from_face(const caae::FaceImage<float>& img) {
  const int S = static_cast<int>(img.side());
  cv::Mat rgb(S, S, CV_8UC3);
  for (int y = 0; y < S; ++y) {
    auto* row = rgb.ptr<std::uint8_t>(y);
    for (int x = 0; x < S * 3; ++x) row[x] = from_unit_range(img.pixels[static_cast<std::size_t>(y * S * 3 + x)]);
  }
  return rgb;
}

/// Decodes a PNG or JPEG, resizes bilinearly to side x side, scales to [-1, 1].
inline caae::FaceImage<float> load_image(const std::filesystem::path& path, std::size_t side) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageError("cannot decode image " + path.string());
  if (bgr.rows != static_cast<int>(side) || bgr.cols != static_cast<int>(side)) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(static_cast<int>(side), static_cast<int>(side)), 0, 0, cv::INTER_LINEAR);
    bgr = resized;
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return face_from_rgb(rgb);
}

/// Lossless PNG encoding with fixed settings, so equal images give equal bytes.
inline std::vector<std::uint8_t> encode_png(const caae::FaceImage<float>& img) {
  cv::Mat bgr;
  cv::cvtColor(rgb_from_face(img), bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", bgr, bytes, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw ImageError("PNG encoding failed");
  return bytes;
}

inline void save_png(const caae::FaceImage<float>& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw ImageError("cannot open " + path.string() + " for writing");
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
  if (std::fclose(f) != 0 || !ok) throw ImageError("failed writing " + path.string());
}

}  // namespace kinface::data
