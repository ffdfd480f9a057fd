#pragma once

// Activation matrices and the REEF binary container.
//
// Layout (all integers little-endian):
//   "REEF"                      4 bytes magic
//   version                     u32 (= 1)
//   model_id                    u32 byte length + UTF-8 bytes
//   dataset_tag                 u32 byte length + UTF-8 bytes
//   layer_index                 u32
//   rows (m), cols (p)          u64, u64
//   dtype                       u32 (1 = IEEE-754 binary32)
//   payload                     m*p binary32 values, row-major
//
// In memory values are doubles; the container stores binary32, so a matrix
// loaded from disk survives save/load bit-exactly.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "reef/error.hpp"
#include "reef/matrix.hpp"

namespace reef {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

namespace detail {

inline std::string cell_label(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

// Throws if any value is NaN/Inf; positions reported 1-based.
inline void require_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j))) throw Error("non-finite value at " + cell_label(i + 1, j + 1));
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  [[nodiscard]] const std::string& bytes() const noexcept { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error("truncated header");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Writes to a sibling temp file and renames over `path`, so a failed write
// never leaves a partial file behind.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("rename failed: " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One matrix plus its header metadata, with no constraint on row count.
// Weight matrices, biases and logits use this directly.
struct Tensor {
  std::string model_id;
  std::string dataset_tag;
  std::uint32_t layer_index = 0;
  Matrix data;
};

inline std::string encode_tensor(const Tensor& t) {
  detail::require_finite(t.data);
  detail::ByteWriter w;
  std::string header = "REEF";
  w.u32(kFormatVersion);
  w.str(t.model_id);
  w.str(t.dataset_tag);
  w.u32(t.layer_index);
  w.u64(t.data.rows());
  w.u64(t.data.cols());
  w.u32(kDtypeFloat32);
  for (double v : t.data.values()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error("value out of binary32 range: " + std::to_string(v));
    w.f32(f);
  }
  return header + w.bytes();
}

inline Tensor decode_tensor(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "REEF") throw Error("bad magic");
  detail::ByteReader r(bytes.substr(4));
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) throw Error("unsupported version " + std::to_string(version));
  Tensor t;
  t.model_id = r.str();
  t.dataset_tag = r.str();
  t.layer_index = r.u32();
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  const std::uint32_t dtype = r.u32();
  if (dtype != kDtypeFloat32) throw Error("unsupported dtype " + std::to_string(dtype));
  if (rows == 0 || cols == 0) throw Error("empty matrix " + std::to_string(rows) + "x" + std::to_string(cols));
  const std::uint64_t avail = r.remaining() / 4;
  if (cols > avail || rows > avail / cols) throw Error("truncated payload");
  std::vector<double> values(static_cast<std::size_t>(rows * cols));
  for (auto& v : values) v = static_cast<double>(r.f32());
  t.data = Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(values));
  detail::require_finite(t.data);
  return t;
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  atomic_write(path, encode_tensor(t));
}

inline Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

// m×p representations of one model layer over m shared samples.
// Immutable once constructed; the constructor enforces m >= 2 and finiteness.
class ActivationMatrix {
 public:
  ActivationMatrix(std::string model_id, std::uint32_t layer_index, Matrix data, std::string dataset_tag = {})
      : model_id_(std::move(model_id)),
        dataset_tag_(std::move(dataset_tag)),
        layer_index_(layer_index),
        data_(std::move(data)) {
    if (data_.rows() < 2) throw Error("m must be ≥ 2");
    if (data_.cols() < 1) throw Error("p must be ≥ 1");
    detail::require_finite(data_);
  }

  [[nodiscard]] const std::string& model_id() const noexcept { return model_id_; }
  [[nodiscard]] const std::string& dataset_tag() const noexcept { return dataset_tag_; }
  [[nodiscard]] std::uint32_t layer_index() const noexcept { return layer_index_; }
  [[nodiscard]] std::size_t m() const noexcept { return data_.rows(); }
  [[nodiscard]] std::size_t p() const noexcept { return data_.cols(); }
  [[nodiscard]] const Matrix& data() const noexcept { return data_; }

  // Same metadata, new values.
  [[nodiscard]] ActivationMatrix with_data(Matrix data, std::string model_id) const {
    return ActivationMatrix(std::move(model_id), layer_index_, std::move(data), dataset_tag_);
  }

  friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;

 private:
  std::string model_id_;
  std::string dataset_tag_;
  std::uint32_t layer_index_;
  Matrix data_;
};

inline void save_activations(const ActivationMatrix& a, const std::filesystem::path& path) {
  write_tensor(path, Tensor{a.model_id(), a.dataset_tag(), a.layer_index(), a.data()});
}

inline ActivationMatrix load_activations(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  return ActivationMatrix(std::move(t.model_id), t.layer_index, std::move(t.data), std::move(t.dataset_tag));
}

// Parses headerless numeric CSV text; rows are samples in order.
// Row/column numbers in error messages are 1-based.
inline Matrix parse_csv_matrix(std::string_view text) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (start > text.size()) break;
      continue;
    }
    ++rows;
    std::size_t col = 0;
    std::size_t cstart = 0;
    while (true) {
      std::size_t cend = line.find(',', cstart);
      if (cend == std::string_view::npos) cend = line.size();
      std::string_view cell = line.substr(cstart, cend - cstart);
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      ++col;
      if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw Error("non-numeric cell " + detail::cell_label(rows, col));
      }
      values.push_back(v);
      if (cend == line.size()) break;
      cstart = cend + 1;
    }
    if (rows == 1) {
      cols = col;
    } else if (col != cols) {
      throw Error("ragged row " + std::to_string(rows));
    }
    if (start > text.size()) break;
  }
  return Matrix(rows, cols, std::move(values));
}

inline ActivationMatrix import_csv(const std::filesystem::path& path, std::string model_id, std::uint32_t layer_index) {
  Matrix data = parse_csv_matrix(read_file(path));
  if (data.rows() < 2) throw Error("fewer than 2 rows");
  return ActivationMatrix(std::move(model_id), layer_index, std::move(data), path.filename().string());
}

}  // namespace reef
