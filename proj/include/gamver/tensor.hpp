#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gamver {

using Array2d = Eigen::ArrayXXd;

// Dense n-dimensional array of doubles, row-major. This is the interchange
// and persistence carrier; 2D work happens on Eigen types and converts at
// the edges.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

// Throws ValidationError if dims/values disagree or any value is non-finite.
void validateTensor(const Tensor& t, const std::string& context);

Tensor toTensor(const Array2d& a);
Tensor toTensor(const Eigen::VectorXd& v);
Array2d toArray2d(const Tensor& t);
Eigen::VectorXd toVector(const Tensor& t);

// GAMV v1 container: magic "GAMV", u8 version=1, u8 rank, rank x u32 LE dims,
// little-endian float64 values row-major.
void writeGamv(const std::filesystem::path& path, const Tensor& t);
Tensor readGamv(const std::filesystem::path& path);

// Compensated (Kahan) summation; used wherever a sum feeds a tolerance.
double kahanSum(const double* data, std::size_t n);

inline double kahanSum(const std::vector<double>& v) {
  return kahanSum(v.data(), v.size());
}

inline double kahanSum(const Array2d& a) {
  return kahanSum(a.data(), static_cast<std::size_t>(a.size()));
}

// FNV-1a over the serialized bytes of a tensor; used for model fingerprints.
std::uint64_t fnv1a(const Tensor& t);
std::string toHex(std::uint64_t v);

}  // namespace gamver
