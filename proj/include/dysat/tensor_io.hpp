#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "dysat/tensor.hpp"

namespace dysat {

// Binary tensor format: u64 rank, u64 dims[rank], f64 data[], all little-endian.

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("truncated tensor stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

template <class Real>
void write_tensor(std::ostream& os, const TensorT<Real>& t) {
  detail::put_u64(os, t.rank());
  for (std::size_t i = 0; i < t.rank(); ++i) detail::put_u64(os, t.dim(i));
  for (std::size_t i = 0; i < t.size(); ++i) detail::put_f64(os, static_cast<double>(t[i]));
}

template <class Real = double>
TensorT<Real> read_tensor(std::istream& is) {
  const std::uint64_t rank = detail::get_u64(is);
  if (rank > 8) throw ParseError("implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(detail::get_u64(is));
  TensorT<Real> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(detail::get_f64(is));
  return t;
}

template <class Real>
void save_tensor(const std::string& path, const TensorT<Real>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path);
  write_tensor(os, t);
}

template <class Real = double>
TensorT<Real> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open: " + path);
  return read_tensor<Real>(is);
}

/// Fixed 17-significant-digit formatting: round-trips doubles exactly and
/// keeps exported files byte-stable across runs.
inline std::string format_value(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

/// TSV export; one row per line, rank-1 tensors become a single row.
template <class Real>
void write_tensor_tsv(std::ostream& os, const TensorT<Real>& t) {
  const std::size_t rows = t.rank() == 2 ? t.dim(0) : 1;
  const std::size_t cols = t.rank() == 2 ? t.dim(1) : t.size();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) os << '\t';
      os << format_value(static_cast<double>(t[i * cols + j]));
    }
    os << '\n';
  }
}

}  // namespace dysat
