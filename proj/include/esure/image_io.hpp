#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "esure/image.hpp"

namespace esure {

class IoError : public std::runtime_error {
 public:
  enum class Code { unwritable, unreadable, malformed_header, dimension_overflow, truncated, invalid_image };

  IoError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] Code code() const noexcept { return code_; }

 private:
  Code code_;
};

enum class ImageFormat { pgm8, tensor_f32 };

/// Tensor container: "ESDN", u16 version, u32 H, u32 W, u32 C, then
/// H*W*C little-endian float32 values.
inline constexpr char kTensorMagic[4] = {'E', 'S', 'D', 'N'};
inline constexpr std::uint16_t kTensorVersion = 1;
/// Upper bound on element count accepted when reading (guards corrupt headers).
inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 31;

void write_tensor_f32(std::ostream& os, const ImageF& image);
ImageF read_tensor_f32(std::istream& is);

void write_tensor_f32(const std::filesystem::path& path, const ImageF& image);
ImageF read_tensor_f32(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255). Values are clamped to [0, 1] and quantized
/// with round-half-up: byte = floor(255 * v + 0.5).
void write_pgm8(const std::filesystem::path& path, const Image& image);
/// Reads P5 with maxval <= 255; returns values byte / maxval.
Image read_pgm8(const std::filesystem::path& path);

std::uint8_t quantize_u8(double v) noexcept;

void write_image(const std::filesystem::path& path, const Image& image, ImageFormat format);
Image read_image(const std::filesystem::path& path, ImageFormat format);
/// Picks the format from the extension (.pgm -> pgm8, otherwise tensor_f32).
ImageFormat format_for(const std::filesystem::path& path);

/// Write then read back through `format`.
Image image_io_roundtrip(const Image& image, const std::filesystem::path& path, ImageFormat format);

}  // namespace esure
