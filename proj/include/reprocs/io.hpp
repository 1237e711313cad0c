#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "reprocs/linalg.hpp"

namespace reprocs::io {

namespace fs = std::filesystem;

inline constexpr std::uint16_t kFormatVersion = 1;

namespace detail {

inline void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& b, double d) { put_u64(b, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  Reader(const std::string& data, std::string path) : d_(data), path_(std::move(path)) {}

  std::uint64_t u(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > d_.size()) throw FormatError(path_ + ": truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  double f64() { return std::bit_cast<double>(u(8)); }

  void magic(const char* m) {
    if (d_.size() < pos_ + 4 || d_.compare(pos_, 4, m) != 0) throw FormatError(path_ + ": bad magic, expected " + m);
    pos_ += 4;
  }

  std::size_t remaining() const { return d_.size() - pos_; }
  const std::string& path() const { return path_; }

 private:
  const std::string& d_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary in the same directory and renames into place.
inline void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw FormatError("rename to " + path.string() + " failed: " + ec.message());
  }
}

inline std::string encode_rstm(const Matrix& m) {
  std::string b;
  b.reserve(24 + 8 * static_cast<std::size_t>(m.size()));
  b.append("RSTM");
  detail::put_u16(b, kFormatVersion);
  detail::put_u16(b, 0);
  detail::put_u64(b, static_cast<std::uint64_t>(m.rows()));
  detail::put_u64(b, static_cast<std::uint64_t>(m.cols()));
  const double* p = m.data();
  for (Index i = 0; i < m.size(); ++i) detail::put_f64(b, p[i]);
  return b;
}

inline Matrix decode_rstm(const std::string& data, const std::string& path = "<memory>") {
  detail::Reader r(data, path);
  r.magic("RSTM");
  if (r.u(2) != kFormatVersion) throw FormatError(path + ": unsupported RSTM version");
  r.u(2);
  const std::uint64_t n = r.u(8);
  const std::uint64_t T = r.u(8);
  if (n != 0 && T > (data.size() / 8) / n) throw FormatError(path + ": header dimensions exceed file size");
  if (r.remaining() != 8 * n * T) throw FormatError(path + ": file length does not match 24 + 8 n T");
  Matrix m(static_cast<Index>(n), static_cast<Index>(T));
  double* p = m.data();
  for (std::uint64_t i = 0; i < n * T; ++i) p[i] = r.f64();
  return m;
}

inline void write_rstm(const fs::path& path, const Matrix& m) { write_atomic(path, encode_rstm(m)); }
inline Matrix read_rstm(const fs::path& path) { return decode_rstm(read_file(path), path.string()); }

struct SupportData {
  std::uint64_t n = 0;
  std::vector<IndexSet> frames;
};

inline std::string encode_rsts(std::uint64_t n, const std::vector<IndexSet>& frames) {
  std::string b;
  b.append("RSTS");
  detail::put_u16(b, kFormatVersion);
  detail::put_u16(b, 0);
  detail::put_u64(b, n);
  detail::put_u64(b, frames.size());
  for (const IndexSet& s : frames) {
    detail::put_u32(b, static_cast<std::uint32_t>(s.size()));
    Index last = -1;
    for (Index i : s) {
      if (i <= last || static_cast<std::uint64_t>(i) >= n) throw FormatError("support indices must ascend and be < n");
      detail::put_u32(b, static_cast<std::uint32_t>(i));
      last = i;
    }
  }
  return b;
}

inline SupportData decode_rsts(const std::string& data, const std::string& path = "<memory>") {
  detail::Reader r(data, path);
  r.magic("RSTS");
  if (r.u(2) != kFormatVersion) throw FormatError(path + ": unsupported RSTS version");
  r.u(2);
  SupportData out;
  out.n = r.u(8);
  const std::uint64_t T = r.u(8);
  if (T > r.remaining() / 4) throw FormatError(path + ": frame count exceeds file size");
  out.frames.resize(T);
  for (std::uint64_t t = 0; t < T; ++t) {
    const std::uint64_t c = r.u(4);
    if (c > out.n || c > r.remaining() / 4) throw FormatError(path + ": bad support count");
    IndexSet& s = out.frames[t];
    s.reserve(c);
    std::int64_t last = -1;
    for (std::uint64_t k = 0; k < c; ++k) {
      const auto i = static_cast<std::int64_t>(r.u(4));
      if (i <= last || static_cast<std::uint64_t>(i) >= out.n)
        throw FormatError(path + ": support indices must ascend and be < n");
      s.push_back(i);
      last = i;
    }
  }
  if (r.remaining() != 0) throw FormatError(path + ": trailing bytes");
  return out;
}

inline void write_rsts(const fs::path& path, std::uint64_t n, const std::vector<IndexSet>& frames) {
  write_atomic(path, encode_rsts(n, frames));
}
inline SupportData read_rsts(const fs::path& path) { return decode_rsts(read_file(path), path.string()); }

// Values of a sparse frame sequence in support order. Layout: "RSTV", u16
// version, u16 reserved, u64 total count, then that many f64.
inline std::string encode_rstv(const std::vector<double>& values) {
  std::string b;
  b.append("RSTV");
  detail::put_u16(b, kFormatVersion);
  detail::put_u16(b, 0);
  detail::put_u64(b, values.size());
  for (double v : values) detail::put_f64(b, v);
  return b;
}

inline std::vector<double> decode_rstv(const std::string& data, const std::string& path = "<memory>") {
  detail::Reader r(data, path);
  r.magic("RSTV");
  if (r.u(2) != kFormatVersion) throw FormatError(path + ": unsupported RSTV version");
  r.u(2);
  const std::uint64_t c = r.u(8);
  if (r.remaining() != 8 * c) throw FormatError(path + ": value count does not match file length");
  std::vector<double> v(c);
  for (auto& x : v) x = r.f64();
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out += format_double(m(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace reprocs::io
