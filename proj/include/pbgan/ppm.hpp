#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "pbgan/tensor.hpp"

namespace pbgan {

class PpmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Byte for a value in [-1, 1]: round((v + 1) * 127.5), halves up, clamped.
unsigned char quantize_unit(double v);
inline double dequantize_unit(unsigned char q) { return q / 127.5 - 1.0; }

/// Binary P6 with header "P6\n<w> <h>\n255\n".
std::string encode_ppm(const Tensor& image);
Tensor decode_ppm(const std::string& bytes);

void write_ppm(const Tensor& image, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace pbgan
