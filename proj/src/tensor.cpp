#include "gamver/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gamver/errors.hpp"

namespace gamver {

namespace {

void putU32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void putF64le(std::string& out, double d) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t getU32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double getF64le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

std::string encodeGamv(const Tensor& t) {
  std::string out;
  out.reserve(6 + 4 * t.dims.size() + 8 * t.values.size());
  out += "GAMV";
  out.push_back(1);
  out.push_back(static_cast<char>(t.dims.size()));
  for (auto d : t.dims) putU32le(out, d);
  for (double v : t.values) putF64le(out, v);
  return out;
}

}  // namespace

void validateTensor(const Tensor& t, const std::string& context) {
  if (t.dims.empty()) throw ValidationError(context + ": tensor has no dims");
  for (auto d : t.dims) {
    if (d == 0) throw ValidationError(context + ": zero extent in dims");
  }
  if (t.values.size() != t.size()) {
    throw ValidationError(context + ": values length " + std::to_string(t.values.size()) +
                          " does not match dims product " + std::to_string(t.size()));
  }
  for (double v : t.values) {
    if (!std::isfinite(v)) throw ValidationError(context + ": non-finite value");
  }
}

Tensor toTensor(const Array2d& a) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(a.rows()), static_cast<std::uint32_t>(a.cols())};
  t.values.reserve(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) t.values.push_back(a(i, j));
  return t;
}

Tensor toTensor(const Eigen::VectorXd& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.values.assign(v.data(), v.data() + v.size());
  return t;
}

Array2d toArray2d(const Tensor& t) {
  if (t.dims.size() != 2) throw ValidationError("toArray2d: rank != 2");
  const Eigen::Index rows = t.dims[0], cols = t.dims[1];
  Array2d a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = t.values[static_cast<std::size_t>(i * cols + j)];
  return a;
}

Eigen::VectorXd toVector(const Tensor& t) {
  if (t.dims.size() != 1) throw ValidationError("toVector: rank != 1");
  return Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
}

void writeGamv(const std::filesystem::path& path, const Tensor& t) {
  validateTensor(t, "writeGamv(" + path.string() + ")");
  if (t.dims.size() > 255) throw ValidationError("writeGamv: rank exceeds 255");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("writeGamv: cannot open " + path.string());
  const std::string bytes = encodeGamv(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("writeGamv: write failed for " + path.string());
}

Tensor readGamv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("readGamv: cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 6 || std::memcmp(buf.data(), "GAMV", 4) != 0)
    throw ValidationError("readGamv: bad magic in " + path.string());
  if (buf[4] != 1) throw ValidationError("readGamv: unsupported version in " + path.string());
  const std::size_t rank = buf[5];
  if (buf.size() < 6 + 4 * rank) throw ValidationError("readGamv: truncated header in " + path.string());
  Tensor t;
  t.dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) t.dims[i] = getU32le(buf.data() + 6 + 4 * i);
  const std::size_t n = t.size();
  const std::size_t offset = 6 + 4 * rank;
  if (buf.size() != offset + 8 * n) throw ValidationError("readGamv: size mismatch in " + path.string());
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.values[i] = getF64le(buf.data() + offset + 8 * i);
  validateTensor(t, "readGamv(" + path.string() + ")");
  return t;
}

double kahanSum(const double* data, std::size_t n) {
  double sum = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = data[i] - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

std::uint64_t fnv1a(const Tensor& t) {
  const std::string bytes = encodeGamv(t);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string toHex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace gamver
