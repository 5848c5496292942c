#pragma once

// Reader for the IDX binary format used by MNIST. Images are binarized by
// digit parity: even -> +1, odd -> -1. Pixels are scaled globally to [0,1].

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/dataset.hpp"

namespace sgdlab {

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IdxError("idx: truncated header in " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

}  // namespace detail

/// Reads an unsigned-byte IDX file, checking the magic number against `expected_magic`.
inline IdxArray read_idx(const std::string& path, std::uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("idx: cannot open " + path);
  IdxArray arr;
  arr.magic = detail::read_be32(in, path);
  if (arr.magic != expected_magic) throw IdxError("idx: bad magic number in " + path);
  const std::uint32_t ndims = arr.magic & 0xffu;
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    arr.dims.push_back(detail::read_be32(in, path));
    total *= arr.dims.back();
  }
  arr.data.resize(total);
  if (total > 0 && !in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(total)))
    throw IdxError("idx: truncated payload in " + path);
  return arr;
}

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline double parity_label(int digit) { return digit % 2 == 0 ? 1.0 : -1.0; }

/// Loads `subset_size` images sampled without replacement. The result has no
/// true_normal, so alignment probes are unavailable on it.
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                std::size_t subset_size, std::uint64_t seed) {
  const IdxArray images = read_idx(images_path, kIdxImagesMagic);
  const IdxArray labels = read_idx(labels_path, kIdxLabelsMagic);
  const std::size_t count = images.dims.at(0);
  if (labels.dims.at(0) != count) throw IdxError("idx: image and label counts differ");
  if (subset_size == 0 || subset_size > count) throw IdxError("idx: subset size exceeds file count");
  const std::size_t pixels = images.data.size() / std::max<std::size_t>(count, 1);

  Rng rng(seed);
  const auto perm = permutation(count, rng);
  Dataset ds;
  ds.points.resize(static_cast<Eigen::Index>(subset_size), static_cast<Eigen::Index>(pixels));
  ds.labels.resize(static_cast<Eigen::Index>(subset_size));
  for (std::size_t i = 0; i < subset_size; ++i) {
    const std::size_t src = perm[i];
    for (std::size_t p = 0; p < pixels; ++p)
      ds.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          images.data[src * pixels + p] / 255.0;
    ds.labels(static_cast<Eigen::Index>(i)) = parity_label(labels.data[src]);
  }
  return ds;
}

}  // namespace sgdlab
