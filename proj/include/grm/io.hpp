/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grm/data.hpp"
#include "grm/errors.hpp"
#include "grm/linalg.hpp"
#include "grm/mlp.hpp"
#include "grm/training.hpp"

namespace grm::io {

// Binary layouts (all integers and floats little-endian):
//
//   dataset     "GRMD" u8:version u32:places u32:per_place u32:dim
//               f32[places·per_place·dim] (row-major) u32[places·per_place]
//   checkpoint  "GRMM" u8:version u32:n_sizes u32[n_sizes]
//               per layer: f64[out·in] weight (row-major), f64[out] bias
//   descriptors "GRMQ" u8:version u32:rows u32:dim f64[rows·dim] (row-major)

inline constexpr std::array<char, 4> kDatasetMagic{'G', 'R', 'M', 'D'};
inline constexpr std::array<char, 4> kCheckpointMagic{'G', 'R', 'M', 'M'};
inline constexpr std::array<char, 4> kDescriptorMagic{'G', 'R', 'M', 'Q'};
inline constexpr std::uint8_t kFormatVersion = 1;

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IoError("truncated file");
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view v(data_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spill(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline void expect_magic(Reader& r, const std::array<char, 4>& magic, const std::string& what) {
  const auto m = r.bytes(4);
  if (std::memcmp(m.data(), magic.data(), 4) != 0) throw IoError(what + ": bad magic bytes");
  const auto version = r.u8();
  if (version != kFormatVersion) throw IoError(what + ": unsupported version " + std::to_string(version));
}

}  // namespace detail

inline std::string encode_dataset(const RetrievalDataset& ds) {
  detail::Writer w;
  w.bytes(kDatasetMagic.data(), 4);
  w.u8(kFormatVersion);
  w.u32(ds.num_places);
  w.u32(ds.per_place);
  w.u32(ds.dim);
  for (double v : ds.inputs.data()) w.f32(static_cast<float>(v));
  for (auto id : ds.place_ids) w.u32(id);
  return w.str();
}

inline RetrievalDataset decode_dataset(std::string bytes) {
  detail::Reader r(std::move(bytes));
  detail::expect_magic(r, kDatasetMagic, "dataset");
  RetrievalDataset ds;
  ds.num_places = r.u32();
  ds.per_place = r.u32();
  ds.dim = r.u32();
  const std::size_t n = static_cast<std::size_t>(ds.num_places) * ds.per_place;
  if (n == 0 || ds.dim == 0) throw IoError("dataset: empty header counts");
  r.need(n * ds.dim * 4 + n * 4);
  ds.inputs = Matrix(n, ds.dim);
  for (double& v : ds.inputs.data()) v = static_cast<double>(r.f32());
  ds.place_ids.resize(n);
  for (auto& id : ds.place_ids) {
    id = r.u32();
    if (id >= ds.num_places) throw IoError("dataset: place id out of range");
  }
  if (!r.at_end()) throw IoError("dataset: trailing bytes");
  return ds;
}

inline void save_dataset(const std::string& path, const RetrievalDataset& ds) { detail::spill(path, encode_dataset(ds)); }
inline RetrievalDataset load_dataset(const std::string& path) { return decode_dataset(detail::slurp(path)); }

inline std::string encode_checkpoint(const MlpEncoder& enc) {
  detail::Writer w;
  w.bytes(kCheckpointMagic.data(), 4);
  w.u8(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(enc.sizes().size()));
  for (auto s : enc.sizes()) w.u32(static_cast<std::uint32_t>(s));
  for (const auto& layer : enc.layers()) {
    for (double v : layer.weight.data()) w.f64(v);
    for (double v : layer.bias) w.f64(v);
  }
  return w.str();
}

inline MlpEncoder decode_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  detail::expect_magic(r, kCheckpointMagic, "checkpoint");
  const std::uint32_t n = r.u32();
  if (n < 2 || n > 64) throw IoError("checkpoint: implausible layer count");
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes) {
    s = r.u32();
    if (s == 0) throw IoError("checkpoint: zero layer size");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer{Matrix(sizes[l + 1], sizes[l]), std::vector<double>(sizes[l + 1])};
    r.need((layer.weight.data().size() + layer.bias.size()) * 8);
    for (double& v : layer.weight.data()) v = r.f64();
    for (double& v : layer.bias) v = r.f64();
    layers.push_back(std::move(layer));
  }
  if (!r.at_end()) throw IoError("checkpoint: trailing bytes");
  return MlpEncoder::from_layers(std::move(layers));
}

inline void save_checkpoint(const std::string& path, const MlpEncoder& enc) {
  detail::spill(path, encode_checkpoint(enc));
}
inline MlpEncoder load_checkpoint(const std::string& path) { return decode_checkpoint(detail::slurp(path)); }

inline std::string encode_descriptors(const Matrix& m) {
  detail::Writer w;
  w.bytes(kDescriptorMagic.data(), 4);
  w.u8(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) w.f64(v);
  return w.str();
}

inline Matrix decode_descriptors(std::string bytes) {
  detail::Reader r(std::move(bytes));
  detail::expect_magic(r, kDescriptorMagic, "descriptor dump");
  const std::size_t rows = r.u32();
  const std::size_t dim = r.u32();
  if (dim == 0) throw IoError("descriptor dump: zero dimension");
  r.need(rows * dim * 8);
  Matrix m(rows, dim);
  for (double& v : m.data()) v = r.f64();
  if (!r.at_end()) throw IoError("descriptor dump: trailing bytes");
  return m;
}

/// Oldest-first copy of the queue contents.
inline void save_queue_snapshot(const std::string& path, const MemoryQueue& q) {
  detail::spill(path, encode_descriptors(q.snapshot()));
}
inline Matrix load_descriptors(const std::string& path) { return decode_descriptors(detail::slurp(path)); }

// ---------------------------------------------------------------------------
// Text formats

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw IoError("format_double failed");
  return {buf.data(), end};
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw IoError("cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

inline constexpr std::string_view kLogHeader = "epoch,loss,desc_cond,grad_cond,recall1,recall5,recall10";

struct LogRow {
  std::size_t epoch = 0;
  double loss = 0, desc_cond = 0, grad_cond = 0, recall1 = 0, recall5 = 0, recall10 = 0;
  bool operator==(const LogRow&) const = default;
};

inline LogRow to_log_row(const EpochRecord& r) {
  return {r.epoch, r.loss, r.desc_cond, r.grad_cond, r.recall1, r.recall5, r.recall10};
}

inline std::string encode_log(const std::vector<LogRow>& rows) {
  std::string out(kLogHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.loss, r.desc_cond, r.grad_cond, r.recall1, r.recall5, r.recall10}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<LogRow> decode_log(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kLogHeader) throw IoError("log: missing or wrong header");
  std::vector<LogRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 7) throw IoError("log: expected 7 fields on line " + std::to_string(i + 1));
    LogRow r;
    r.epoch = static_cast<std::size_t>(parse_double(f[0]));
    r.loss = parse_double(f[1]);
    r.desc_cond = parse_double(f[2]);
    r.grad_cond = parse_double(f[3]);
    r.recall1 = parse_double(f[4]);
    r.recall5 = parse_double(f[5]);
    r.recall10 = parse_double(f[6]);
    rows.push_back(r);
  }
  return rows;
}

inline void save_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::vector<LogRow> rows;
  for (const auto& r : log) rows.push_back(to_log_row(r));
  detail::spill(path, encode_log(rows));
}
inline std::vector<LogRow> load_log(const std::string& path) { return decode_log(detail::slurp(path)); }

/// "# dim=C" then one comma-separated row per line.
inline std::string encode_matrix(const Matrix& m) {
  std::string out = "# dim=" + std::to_string(m.cols()) + "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

/// "# dim=C" then one value per line.
inline std::string encode_vector(const std::vector<double>& v) {
  std::string out = "# dim=" + std::to_string(v.size()) + "\n";
  for (double x : v) {
    out += format_double(x);
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::size_t parse_dim_comment(const std::vector<std::string>& lines) {
  if (lines.empty() || lines.front().rfind("# dim=", 0) != 0) throw IoError("missing '# dim=' header");
  return static_cast<std::size_t>(parse_double(std::string_view(lines.front()).substr(6)));
}

}  // namespace detail

inline Matrix decode_matrix(const std::string& text) {
  const auto lines = lines_of(text);
  const std::size_t dim = detail::parse_dim_comment(lines);
  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#') continue;
    const auto f = split(lines[i], ',');
    if (f.size() != dim) throw IoError("matrix: row " + std::to_string(i) + " has wrong width");
    for (auto s : f) values.push_back(parse_double(s));
    ++rows;
  }
  return Matrix(rows, dim, std::move(values));
}

inline std::vector<double> decode_vector(const std::string& text) {
  const auto lines = lines_of(text);
  const std::size_t dim = detail::parse_dim_comment(lines);
  std::vector<double> v;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#') continue;
    v.push_back(parse_double(lines[i]));
  }
  if (v.size() != dim) throw IoError("vector: length differs from '# dim=' header");
  return v;
}

inline void save_matrix(const std::string& path, const Matrix& m) { detail::spill(path, encode_matrix(m)); }
inline Matrix load_matrix(const std::string& path) { return decode_matrix(detail::slurp(path)); }
inline void save_vector(const std::string& path, const std::vector<double>& v) { detail::spill(path, encode_vector(v)); }
inline std::vector<double> load_vector(const std::string& path) { return decode_vector(detail::slurp(path)); }

/// Flat `key=value` text; '#' starts a comment line. Later keys win.
inline std::vector<std::pair<std::string, std::string>> decode_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw IoError("key=value: malformed line " + std::to_string(i + 1));
    auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
      return std::string(s);
    };
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::string encode_key_values(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline std::vector<std::pair<std::string, std::string>> load_key_values(const std::string& path) {
  return decode_key_values(detail::slurp(path));
}
inline void save_key_values(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  detail::spill(path, encode_key_values(kv));
}

}  // namespace grm::io
