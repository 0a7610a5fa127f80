#include "pbgan/ppm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace pbgan {

namespace {

constexpr long kMaxExtent = 1 << 15;

}  // namespace

unsigned char quantize_unit(double v) {
  if (!std::isfinite(v)) throw PpmError("cannot quantize non-finite pixel value");
  const double q = std::floor((v + 1.0) * 127.5 + 0.5);
  if (q <= 0.0) return 0;
  if (q >= 255.0) return 255;
  return static_cast<unsigned char>(q);
}

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw PpmError("PPM image must be [h, w, 3], got " + shape_str(image.shape()));
  }
  const int h = image.dim(0), w = image.dim(1);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + image.size());
  for (std::size_t i = 0; i < image.size(); ++i) out[header + i] = static_cast<char>(quantize_unit(image[i]));
  return out;
}

Tensor decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > kMaxExtent) throw PpmError(std::string("PPM ") + what + " overflows");
      ++pos;
    }
    if (pos == start) throw PpmError(std::string("malformed PPM header: missing ") + what);
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw PpmError("malformed PPM header: magic is not P6");
  pos = 2;
  const long w = read_int("width");
  const long h = read_int("height");
  const long maxval = read_int("maxval");
  if (w <= 0 || h <= 0) throw PpmError("malformed PPM header: zero extent");
  if (maxval != 255) throw PpmError("unsupported PPM maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw PpmError("malformed PPM header: no separator before payload");
  }
  ++pos;
  const std::size_t payload = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() - pos != payload) {
    throw PpmError("PPM payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                   std::to_string(payload));
  }
  Tensor image({static_cast<int>(h), static_cast<int>(w), 3});
  for (std::size_t i = 0; i < payload; ++i) image[i] = dequantize_unit(static_cast<unsigned char>(bytes[pos + i]));
  return image;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  const std::string bytes = encode_ppm(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PpmError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw PpmError("failed writing " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PpmError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace pbgan
