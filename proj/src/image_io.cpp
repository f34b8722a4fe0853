#include "esure/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace esure {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "float32 container requires IEEE floats");

template <typename U>
void put_le(std::ostream& os, U value) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U)))
    throw IoError(IoError::Code::truncated, std::string("tensor: truncated while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(IoError::Code::unwritable, "cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Code::unreadable, "cannot open for reading: " + path.string());
  return is;
}

// Skips whitespace and '#' comments in a PNM header, then reads an unsigned
// decimal token.
std::uint64_t pnm_token(std::istream& is, const std::string& path) {
  int c = is.get();
  while (true) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = is.get();
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      c = is.get();
    } else {
      break;
    }
  }
  if (c == EOF || c < '0' || c > '9') throw IoError(IoError::Code::malformed_header, "pgm: bad header in " + path);
  std::uint64_t v = 0;
  while (c >= '0' && c <= '9') {
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
    if (v > (std::uint64_t{1} << 32)) throw IoError(IoError::Code::dimension_overflow, "pgm: header value too large in " + path);
    c = is.get();
  }
  return v;
}

}  // namespace

void write_tensor_f32(std::ostream& os, const ImageF& image) {
  const Shape& s = image.shape();
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (s.height > kMax || s.width > kMax || s.channels > kMax)
    throw IoError(IoError::Code::dimension_overflow, "tensor: dimension exceeds u32");
  if (!image.all_finite()) throw IoError(IoError::Code::invalid_image, "tensor: non-finite values");
  os.write(kTensorMagic, 4);
  put_le<std::uint16_t>(os, kTensorVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.height));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.width));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.channels));
  for (float v : image.data()) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw IoError(IoError::Code::unwritable, "tensor: write failed");
}

ImageF read_tensor_f32(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw IoError(IoError::Code::truncated, "tensor: missing magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw IoError(IoError::Code::malformed_header, "tensor: bad magic");
  const auto version = get_le<std::uint16_t>(is, "version");
  if (version != kTensorVersion)
    throw IoError(IoError::Code::malformed_header, "tensor: unsupported version " + std::to_string(version));
  const std::uint64_t h = get_le<std::uint32_t>(is, "height");
  const std::uint64_t w = get_le<std::uint32_t>(is, "width");
  const std::uint64_t c = get_le<std::uint32_t>(is, "channels");
  if (h == 0 || w == 0 || c == 0) throw IoError(IoError::Code::malformed_header, "tensor: zero dimension");
  if (h * w > kMaxTensorElements || h * w * c > kMaxTensorElements)
    throw IoError(IoError::Code::dimension_overflow, "tensor: element count too large");
  std::vector<float> data(h * w * c);
  for (auto& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(is, "payload"));
  return ImageF(Shape{h, w, c}, std::move(data));
}

void write_tensor_f32(const std::filesystem::path& path, const ImageF& image) {
  auto os = open_out(path);
  write_tensor_f32(os, image);
}

ImageF read_tensor_f32(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_tensor_f32(is);
}

std::uint8_t quantize_u8(double v) noexcept {
  const double c = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
}

void write_pgm8(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1) throw IoError(IoError::Code::invalid_image, "pgm: only single-channel images");
  if (!image.all_finite()) throw IoError(IoError::Code::invalid_image, "pgm: non-finite values");
  auto os = open_out(path);
  os << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = static_cast<char>(quantize_u8(image[i]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError(IoError::Code::unwritable, "pgm: write failed: " + path.string());
}

Image read_pgm8(const std::filesystem::path& path) {
  auto is = open_in(path);
  char p = 0, five = 0;
  if (!is.get(p) || !is.get(five) || p != 'P' || five != '5')
    throw IoError(IoError::Code::malformed_header, "pgm: not a binary P5 file: " + path.string());
  const auto w = pnm_token(is, path.string());
  const auto h = pnm_token(is, path.string());
  const auto maxval = pnm_token(is, path.string());
  if (w == 0 || h == 0) throw IoError(IoError::Code::malformed_header, "pgm: zero dimension");
  if (maxval == 0 || maxval > 255) throw IoError(IoError::Code::malformed_header, "pgm: maxval must be in 1..255");
  if (w * h > kMaxTensorElements) throw IoError(IoError::Code::dimension_overflow, "pgm: image too large");
  // pnm_token consumed exactly one whitespace byte after maxval.
  std::vector<char> bytes(w * h);
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw IoError(IoError::Code::truncated, "pgm: truncated pixel data: " + path.string());
  Image out(Shape{h, w, 1});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    out[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / static_cast<double>(maxval);
  return out;
}

ImageFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".pgm" ? ImageFormat::pgm8 : ImageFormat::tensor_f32;
}

void write_image(const std::filesystem::path& path, const Image& image, ImageFormat format) {
  if (format == ImageFormat::pgm8)
    write_pgm8(path, image);
  else
    write_tensor_f32(path, image_cast<float>(image));
}

Image read_image(const std::filesystem::path& path, ImageFormat format) {
  if (format == ImageFormat::pgm8) return read_pgm8(path);
  return image_cast<double>(read_tensor_f32(path));
}

Image image_io_roundtrip(const Image& image, const std::filesystem::path& path, ImageFormat format) {
  write_image(path, image, format);
  return read_image(path, format);
}

}  // namespace esure
