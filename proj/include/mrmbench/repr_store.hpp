#pragma once

// Binary representation dumps and their line-delimited JSON metadata sidecar.
//
// Binary layout (all integers little-endian):
//   0..3    magic "MRMB"
//   4..7    version (u32) = 1
//   8       dtype (u8)    = 0 (float32)
//   9..12   d (u32)
//   13..20  n (u64)
//   21..    n*d float32 values, row-major
//
// Sidecar: one JSON object per line, {"id", "label", "split"}, row order.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mrmbench/error.hpp"

namespace mrmbench {

using Label = std::uint32_t;

enum class Split { train, validation, test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  return std::nullopt;
}

struct SampleMeta {
  std::string id;
  Label label = 0;
  Split split = Split::train;

  bool operator==(const SampleMeta&) const = default;
};

/// Dense n x d row-major float32 matrix. Shape is checked on construction;
/// finiteness is checked by the dump reader/writer and by validate_pair.
class RepresentationMatrix {
 public:
  RepresentationMatrix() = default;

  RepresentationMatrix(std::size_t rows, std::size_t cols)
      : RepresentationMatrix(rows, cols, std::vector<float>(rows * cols, 0.0f)) {}

  RepresentationMatrix(std::size_t rows, std::size_t cols, std::vector<float> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows_ == 0 || cols_ == 0)
      throw Error("repr_store", Errc::shape_mismatch, "matrix must have n >= 1 and d >= 1");
    if (data_.size() != rows_ * cols_)
      throw Error("repr_store", Errc::shape_mismatch,
                  "payload has " + std::to_string(data_.size()) + " values, expected " +
                      std::to_string(rows_ * cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const float> values() const noexcept { return data_; }

  bool row_finite(std::size_t i) const {
    for (float v : row(i))
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// New matrix holding the given rows, in the given order.
  RepresentationMatrix select_rows(std::span<const std::size_t> indices) const {
    std::vector<float> out;
    out.reserve(indices.size() * cols_);
    for (std::size_t i : indices) {
      if (i >= rows_) throw Error("repr_store", Errc::out_of_range, "row index out of range");
      auto r = row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return RepresentationMatrix(indices.size(), cols_, std::move(out));
  }

  bool operator==(const RepresentationMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct DumpHeader {
  static constexpr std::array<char, 4> kMagic{'M', 'R', 'M', 'B'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint8_t kFloat32 = 0;
  static constexpr std::size_t kSize = 21;

  std::array<char, 4> magic = kMagic;
  std::uint32_t version = kVersion;
  std::uint8_t dtype = kFloat32;
  std::uint32_t d = 0;
  std::uint64_t n = 0;
};

struct DumpPaths {
  std::filesystem::path binary;
  std::filesystem::path meta;
};

namespace detail {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b)
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(p[b]) << (8 * b);
  return value;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("repr_store", Errc::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error("repr_store", Errc::io, "read failed on " + path.string());
  return std::move(buf).str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("repr_store", Errc::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error("repr_store", Errc::io, "write failed on " + path.string());
}

}  // namespace detail

inline nlohmann::json meta_to_json(const SampleMeta& m) {
  return {{"id", m.id}, {"label", m.label}, {"split", std::string(split_name(m.split))}};
}

/// Strict parse of one sidecar line. `line_no` is 1-based, for diagnostics.
inline SampleMeta parse_meta_line(std::string_view line, std::size_t line_no) {
  auto fail = [&](const std::string& why) {
    return Error("repr_store", Errc::malformed_meta,
                 "metadata line " + std::to_string(line_no) + ": " + why);
  };
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string 'id'");
  if (!j.contains("label") || !j["label"].is_number_integer()) throw fail("missing integer 'label'");
  if (!j.contains("split") || !j["split"].is_string()) throw fail("missing string 'split'");
  const auto label = j["label"].get<std::int64_t>();
  if (label < 0 || label > std::int64_t{UINT32_MAX}) throw fail("label must be a non-negative u32");
  auto split = parse_split(j["split"].get<std::string>());
  if (!split) throw fail("split must be train, validation or test");
  return SampleMeta{j["id"].get<std::string>(), static_cast<Label>(label), *split};
}

inline std::string encode_meta(std::span<const SampleMeta> meta) {
  std::string out;
  for (const auto& m : meta) {
    out += meta_to_json(m).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SampleMeta> decode_meta(const std::string& text) {
  std::vector<SampleMeta> meta;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    meta.push_back(parse_meta_line(line, line_no));
    pos = end + 1;
  }
  return meta;
}

inline void write_meta(const std::filesystem::path& path, std::span<const SampleMeta> meta) {
  detail::write_file(path, encode_meta(meta));
}

inline std::vector<SampleMeta> read_meta(const std::filesystem::path& path) {
  return decode_meta(detail::read_file(path));
}

inline std::string encode_dump(const RepresentationMatrix& matrix) {
  if (matrix.cols() > UINT32_MAX)
    throw Error("repr_store", Errc::shape_mismatch, "d does not fit in u32");
  std::string out;
  out.reserve(DumpHeader::kSize + matrix.values().size() * 4);
  out.append(DumpHeader::kMagic.data(), DumpHeader::kMagic.size());
  detail::put_le<std::uint32_t>(out, DumpHeader::kVersion);
  out.push_back(static_cast<char>(DumpHeader::kFloat32));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(matrix.cols()));
  detail::put_le<std::uint64_t>(out, matrix.rows());
  for (float v : matrix.values()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline DumpHeader decode_header(std::string_view bytes) {
  if (bytes.size() < DumpHeader::kSize)
    throw Error("repr_store", Errc::length_mismatch, "file shorter than the 21-byte header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  DumpHeader h;
  std::copy_n(bytes.data(), 4, h.magic.begin());
  if (h.magic != DumpHeader::kMagic) throw Error("repr_store", Errc::bad_magic, "bad magic, expected MRMB");
  h.version = detail::get_le<std::uint32_t>(p + 4);
  if (h.version != DumpHeader::kVersion)
    throw Error("repr_store", Errc::unsupported_version, "unsupported version " + std::to_string(h.version));
  h.dtype = p[8];
  if (h.dtype != DumpHeader::kFloat32)
    throw Error("repr_store", Errc::unsupported_dtype, "unsupported dtype " + std::to_string(h.dtype));
  h.d = detail::get_le<std::uint32_t>(p + 9);
  h.n = detail::get_le<std::uint64_t>(p + 13);
  return h;
}

inline RepresentationMatrix decode_dump(std::string_view bytes) {
  const DumpHeader h = decode_header(bytes);
  if (h.n == 0 || h.d == 0) throw Error("repr_store", Errc::shape_mismatch, "header declares n or d of 0");
  const std::uint64_t payload = bytes.size() - DumpHeader::kSize;
  if (h.n > payload / 4 / h.d || payload != h.n * h.d * 4)
    throw Error("repr_store", Errc::length_mismatch,
                "payload is " + std::to_string(payload) + " bytes, header declares n=" +
                    std::to_string(h.n) + " d=" + std::to_string(h.d));
  std::vector<float> values(h.n * h.d);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + DumpHeader::kSize;
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
    if (!std::isfinite(values[i]))
      throw Error("repr_store", Errc::non_finite,
                  "non-finite value at row " + std::to_string(i / h.d));
  }
  return RepresentationMatrix(h.n, h.d, std::move(values));
}

inline void write_dump(const RepresentationMatrix& matrix, std::span<const SampleMeta> meta,
                       const DumpPaths& paths) {
  if (meta.size() != matrix.rows())
    throw Error("repr_store", Errc::meta_count_mismatch,
                std::to_string(meta.size()) + " metadata records for " + std::to_string(matrix.rows()) + " rows");
  for (std::size_t i = 0; i < matrix.rows(); ++i)
    if (!matrix.row_finite(i))
      throw Error("repr_store", Errc::non_finite, "non-finite value in row " + std::to_string(i));
  detail::write_file(paths.binary, encode_dump(matrix));
  write_meta(paths.meta, meta);
}

struct Dump {
  RepresentationMatrix matrix;
  std::vector<SampleMeta> meta;
};

inline Dump read_dump(const DumpPaths& paths) {
  Dump dump{decode_dump(detail::read_file(paths.binary)), read_meta(paths.meta)};
  if (dump.meta.size() != dump.matrix.rows())
    throw Error("repr_store", Errc::meta_count_mismatch,
                std::to_string(dump.meta.size()) + " metadata lines for " +
                    std::to_string(dump.matrix.rows()) + " rows");
  return dump;
}

struct ValidationReport {
  struct BadLabel {
    std::size_t row;
    Label label;
  };

  std::vector<std::string> duplicate_ids;
  std::vector<BadLabel> out_of_range_labels;
  std::vector<std::size_t> non_finite_rows;
  std::map<Split, std::size_t> split_counts;
  std::optional<std::pair<std::size_t, std::size_t>> count_mismatch;  // (rows, meta)

  bool valid() const {
    return duplicate_ids.empty() && out_of_range_labels.empty() && non_finite_rows.empty() &&
           !count_mismatch;
  }

  std::string summary() const {
    std::ostringstream s;
    if (count_mismatch)
      s << "row/meta count mismatch (" << count_mismatch->first << " vs " << count_mismatch->second << "); ";
    if (!duplicate_ids.empty()) s << duplicate_ids.size() << " duplicate id(s), first '" << duplicate_ids[0] << "'; ";
    if (!out_of_range_labels.empty())
      s << out_of_range_labels.size() << " out-of-range label(s), first at row " << out_of_range_labels[0].row
        << "; ";
    if (!non_finite_rows.empty()) s << non_finite_rows.size() << " non-finite row(s); ";
    std::string out = s.str();
    if (out.size() >= 2) out.resize(out.size() - 2);
    return out.empty() ? "valid" : out;
  }
};

inline ValidationReport validate_pair(const RepresentationMatrix& matrix, std::span<const SampleMeta> meta,
                                      std::size_t expected_k) {
  ValidationReport report;
  if (meta.size() != matrix.rows()) report.count_mismatch = std::pair{matrix.rows(), meta.size()};
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto& m = meta[i];
    if (!seen.insert(m.id).second) report.duplicate_ids.push_back(m.id);
    if (m.label >= expected_k) report.out_of_range_labels.push_back({i, m.label});
    ++report.split_counts[m.split];
  }
  for (std::size_t i = 0; i < matrix.rows(); ++i)
    if (!matrix.row_finite(i)) report.non_finite_rows.push_back(i);
  return report;
}

/// Throws if the pair fails validation; used before any numerical work.
inline void require_valid(const RepresentationMatrix& matrix, std::span<const SampleMeta> meta,
                          std::size_t expected_k) {
  auto report = validate_pair(matrix, meta, expected_k);
  if (!report.valid()) throw Error("repr_store", Errc::invalid_argument, "invalid dump: " + report.summary());
}

}  // namespace mrmbench
