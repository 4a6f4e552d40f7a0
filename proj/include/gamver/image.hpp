#pragma once

#include <filesystem>

#include "gamver/tensor.hpp"

namespace gamver {

// Grayscale image with pixel values in [0,1].
struct Image {
  Array2d pixels;

  Eigen::Index height() const { return pixels.rows(); }
  Eigen::Index width() const { return pixels.cols(); }
};

// Reads binary PGM (P5, 8 or 16 bit) or 8-bit grayscale PNG. Pixel values
// are scaled linearly from the source range to [0,1]. Color PNGs are
// rejected, not converted.
Image loadImage(const std::filesystem::path& path);

// 8-bit binary PGM, values rounded from [0,1].
void savePgm(const std::filesystem::path& path, const Image& img);

// 8-bit RGB PNG; rgb is tightly packed row-major, 3 bytes per pixel.
void saveRgbPng(const std::filesystem::path& path, int height, int width,
                const std::vector<unsigned char>& rgb);

}  // namespace gamver
