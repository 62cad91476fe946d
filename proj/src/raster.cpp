#include "sgts/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sgts/errors.hpp"

namespace sgts {

namespace {

struct Header {
  int width = 0;
  int height = 0;
  std::size_t payload_offset = 0;
};

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw ParseError(std::string(field) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      if (pos_ >= bytes_.size()) throw ParseError(std::string("truncated header: missing ") + field, pos_);
      throw ParseError(std::string("expected ") + field, pos_);
    }
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

Header parse_header(const std::string& bytes, const char* magic) {
  if (bytes.size() < 2) throw ParseError("truncated header", bytes.size());
  if (bytes.compare(0, 2, magic) != 0) {
    throw ParseError(std::string("bad magic, expected ") + magic, 0);
  }
  HeaderReader r(bytes);
  r.advance(2);
  Header h;
  h.width = r.read_uint("width");
  h.height = r.read_uint("height");
  r.skip_space_and_comments();
  const std::size_t maxval_at = r.pos();
  const int maxval = r.read_uint("maxval");
  if (maxval != 255) {
    throw ParseError("unsupported maxval " + std::to_string(maxval) + " (only 255)", maxval_at);
  }
  if (h.width <= 0 || h.height <= 0) throw ParseError("zero image dimension", maxval_at);
  if (r.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos()]))) {
    throw ParseError("expected single whitespace after maxval", r.pos());
  }
  h.payload_offset = r.pos() + 1;
  return h;
}

void check_payload(const std::string& bytes, const Header& h, std::size_t channels) {
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * channels;
  const std::size_t have = bytes.size() - h.payload_offset;
  if (have < need) {
    throw ParseError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(have),
                     bytes.size());
  }
  if (have > need) throw ParseError("trailing bytes after payload", h.payload_offset + need);
}

std::string header_text(const char* magic, int width, int height) {
  return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) +
         "\n255\n";
}

}  // namespace

std::string encode_ppm(const RgbImage& image) {
  std::string out = header_text("P6", image.width, image.height);
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage decode_ppm(const std::string& bytes) {
  const Header h = parse_header(bytes, "P6");
  check_payload(bytes, h, 3);
  RgbImage img;
  img.width = h.width;
  img.height = h.height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), bytes.end());
  return img;
}

std::string encode_pgm(const LabelMask& mask) {
  std::string out = header_text("P5", mask.width, mask.height);
  out.append(mask.labels.begin(), mask.labels.end());
  return out;
}

LabelMask decode_pgm(const std::string& bytes) {
  const Header h = parse_header(bytes, "P5");
  check_payload(bytes, h, 1);
  LabelMask mask;
  mask.width = h.width;
  mask.height = h.height;
  mask.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), bytes.end());
  return mask;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_file(path, encode_ppm(image));
}

RgbImage read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

void write_pgm(const std::filesystem::path& path, const LabelMask& mask) {
  write_file(path, encode_pgm(mask));
}

LabelMask read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

RgbImage quantize(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("quantize: expected [3,H,W], got " + shape_string(image.shape()));
  }
  RgbImage out;
  out.height = image.dim(1);
  out.width = image.dim(2);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, i, j), 0.0, 1.0);
        out.pixels[(static_cast<std::size_t>(i) * out.width + j) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

Tensor dequantize(const RgbImage& image) {
  Tensor out({3, image.height, image.width});
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      for (int c = 0; c < 3; ++c) {
        out.at(c, i, j) = image.pixels[(static_cast<std::size_t>(i) * image.width + j) * 3 + c] / 255.0;
      }
    }
  }
  return out;
}

}  // namespace sgts
