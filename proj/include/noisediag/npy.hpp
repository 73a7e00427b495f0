#pragma once

// Reader and writer for NPY v1.0/v2.0 files holding 4-D float32/float64
// arrays. Only little-endian '<f4' and '<f8' payloads are accepted.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noisediag/error.hpp"
#include "noisediag/tensor.hpp"

namespace noisediag {

namespace npy_detail {

inline constexpr std::string_view magic = "\x93NUMPY";
inline constexpr std::size_t alignment = 64;

struct Header {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

// Parses the Python-literal dict that numpy writes as the array header, e.g.
// {'descr': '<f8', 'fortran_order': False, 'shape': (4, 16, 40, 64), }
class HeaderParser {
public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  Header parse() {
    Header header;
    bool have_descr = false, have_order = false, have_shape = false;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = parse_string();
      expect(':');
      if (key == "descr") {
        header.descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        header.fortran_order = parse_bool();
        have_order = true;
      } else if (key == "shape") {
        header.shape = parse_tuple();
        have_shape = true;
      } else {
        fail("unexpected header key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        fail("expected ',' or '}'");
      }
    }
    if (!have_descr || !have_order || !have_shape)
      fail("header must define descr, fortran_order and shape");
    return header;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw format_error("malformed NPY header at offset " + std::to_string(pos_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n'))
      ++pos_;
  }

  char peek() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of header");
    return text_[pos_];
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string parse_string() {
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected a quoted string");
    const std::size_t end = text_.find(quote, pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(text_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  bool parse_bool() {
    skip_ws();
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False");
  }

  std::vector<std::size_t> parse_tuple() {
    expect('(');
    std::vector<std::size_t> dims;
    while (true) {
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(text_[pos_]))) fail("expected a dimension");
      std::size_t value = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        value = value * 10 + static_cast<std::size_t>(text_[pos_] - '0');
        ++pos_;
      }
      dims.push_back(value);
      if (peek() == ',') ++pos_;
      else if (peek() != ')') fail("expected ',' or ')' in shape");
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

template <class T>
T load_le(const unsigned char* p) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<Bits>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

template <class T>
void store_le(T value, std::string& out) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const auto bits = std::bit_cast<Bits>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::string header_text(const Shape& shape, StorageType storage) {
  std::string dict = "{'descr': '";
  dict += storage == StorageType::f32 ? "<f4" : "<f8";
  dict += "', 'fortran_order': False, 'shape': (";
  const auto dims = shape.dims();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) dict += ", ";
    dict += std::to_string(dims[i]);
  }
  dict += "), }";
  return dict;
}

} // namespace npy_detail

/// Serializes a tensor into NPY bytes using its storage type. Version 1.0 is
/// written unless the header does not fit in 16 bits.
inline std::string encode_npy(const LatentTensor& tensor) {
  std::string dict = npy_detail::header_text(tensor.shape(), tensor.storage());
  std::size_t prefix = npy_detail::magic.size() + 2 + 2;
  // header + padding + '\n' must end on the alignment boundary
  std::size_t total = prefix + dict.size() + 1;
  std::size_t padded = (total + npy_detail::alignment - 1) / npy_detail::alignment * npy_detail::alignment;
  std::uint8_t major = 1;
  if (padded - prefix > 0xffff) {
    major = 2;
    prefix += 2;
    total = prefix + dict.size() + 1;
    padded = (total + npy_detail::alignment - 1) / npy_detail::alignment * npy_detail::alignment;
  }
  dict.append(padded - total, ' ');
  dict.push_back('\n');

  const std::size_t item = tensor.storage() == StorageType::f32 ? 4 : 8;
  std::string out;
  out.reserve(padded + tensor.size() * item);
  out.append(npy_detail::magic);
  out.push_back(static_cast<char>(major));
  out.push_back(0);
  const std::size_t len = dict.size();
  const std::size_t len_bytes = major == 1 ? 2 : 4;
  for (std::size_t i = 0; i < len_bytes; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += dict;
  for (double v : tensor.values()) {
    if (tensor.storage() == StorageType::f32) npy_detail::store_le(static_cast<float>(v), out);
    else npy_detail::store_le(v, out);
  }
  return out;
}

/// Parses NPY bytes into a tensor. Fortran-ordered payloads are transposed to
/// row-major. `source` names the origin in error messages.
inline LatentTensor decode_npy(std::string_view bytes, const std::string& source = "<memory>") {
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 10 || bytes.substr(0, 6) != npy_detail::magic)
    throw format_error(source + ": not an NPY file (bad magic)");
  const unsigned major = raw[6];
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = raw[8] | (static_cast<std::size_t>(raw[9]) << 8);
    offset = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) throw format_error(source + ": truncated NPY v2 preamble");
    header_len = raw[8] | (static_cast<std::size_t>(raw[9]) << 8) |
                 (static_cast<std::size_t>(raw[10]) << 16) | (static_cast<std::size_t>(raw[11]) << 24);
    offset = 12;
  } else {
    throw format_error(source + ": unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw format_error(source + ": truncated NPY header");

  npy_detail::Header header;
  try {
    header = npy_detail::HeaderParser(bytes.substr(offset, header_len)).parse();
  } catch (const format_error& e) {
    throw format_error(source + ": " + e.what());
  }

  std::size_t item = 0;
  StorageType storage{};
  if (header.descr == "<f4") {
    item = 4;
    storage = StorageType::f32;
  } else if (header.descr == "<f8") {
    item = 8;
    storage = StorageType::f64;
  } else {
    throw format_error(source + ": unsupported dtype '" + header.descr + "' (expected <f4 or <f8)");
  }

  if (header.shape.size() != 4)
    throw shape_error(source + ": expected a 4-D array (C, T, H, W), got " +
                      std::to_string(header.shape.size()) + " dimensions");
  const Shape shape{header.shape[0], header.shape[1], header.shape[2], header.shape[3]};
  if (shape.size() == 0) throw shape_error(source + ": zero-length axis in shape " + shape.to_string());

  const std::size_t payload = offset + header_len;
  if (bytes.size() - payload != shape.size() * item)
    throw format_error(source + ": payload holds " + std::to_string(bytes.size() - payload) +
                       " bytes, shape " + shape.to_string() + " needs " +
                       std::to_string(shape.size() * item));

  std::vector<double> data(shape.size());
  const unsigned char* p = raw + payload;
  auto read = [&](std::size_t k) {
    return item == 4 ? static_cast<double>(npy_detail::load_le<float>(p + k * 4))
                     : npy_detail::load_le<double>(p + k * 8);
  };
  if (!header.fortran_order) {
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = read(k);
  } else {
    const auto d = shape.dims();
    std::size_t k = 0;
    for (std::size_t w = 0; w < d[3]; ++w)
      for (std::size_t h = 0; h < d[2]; ++h)
        for (std::size_t t = 0; t < d[1]; ++t)
          for (std::size_t c = 0; c < d[0]; ++c) data[((c * d[1] + t) * d[2] + h) * d[3] + w] = read(k++);
  }

  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!std::isfinite(data[k]))
      throw nonfinite_value_error(source + ": non-finite value at flat index " + std::to_string(k), k);
  }
  return LatentTensor(shape, std::move(data), storage);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed for " + path.string());
}

inline LatentTensor load_tensor(const std::filesystem::path& path) {
  return decode_npy(read_file_bytes(path), path.string());
}

inline void save_tensor(const std::filesystem::path& path, const LatentTensor& tensor) {
  write_file_bytes(path, encode_npy(tensor));
}

} // namespace noisediag
