#pragma once

// Binary netpbm I/O: P6 pixmaps for images, P5 graymaps for label masks.
// Only maxval 255 is accepted. Parse failures carry the byte offset.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgts/autograd.hpp"
#include "sgts/label_mask.hpp"

namespace sgts {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::string& bytes);
std::string encode_pgm(const LabelMask& mask);
LabelMask decode_pgm(const std::string& bytes);

void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_pgm(const std::filesystem::path& path);

// [3,H,W] tensor in [0,1] <-> 8-bit RGB (round(clamp(x) * 255)).
RgbImage quantize(const Tensor& image);
Tensor dequantize(const RgbImage& image);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace sgts
