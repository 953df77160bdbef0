// SPDX-License-Identifier: Apache-2.0

#include "spiel/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spiel/accounting.hpp"
#include "spiel/binary_io.hpp"
#include "spiel/error.hpp"
#include "spiel/kernels.hpp"

namespace spiel {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'Q', 'T'};
constexpr uint32_t kVersion = 1;

std::array<float, 16> make_linear16() {
  std::array<float, 16> levels{};
  for (int k = 0; k < 16; ++k) {
    levels[k] = static_cast<float>(-1.0 + 2.0 * k / 15.0);
  }
  levels[0] = -1.0f;
  levels[15] = 1.0f;
  return levels;
}

}  // namespace

const std::array<float, 16>& codebook_levels(Codebook book) {
  static const std::array<float, 16> linear16 = make_linear16();
  switch (book) {
    case Codebook::kLinear16:
      return linear16;
  }
  throw Error("unknown codebook id " + std::to_string(static_cast<int>(book)));
}

double codebook_max_gap(Codebook book) {
  const auto& levels = codebook_levels(book);
  double gap = 0.0;
  for (std::size_t k = 1; k < levels.size(); ++k) {
    gap = std::max(gap, static_cast<double>(levels[k]) - static_cast<double>(levels[k - 1]));
  }
  return gap;
}

uint8_t nearest_level(Codebook book, double u) {
  const auto& levels = codebook_levels(book);
  // Levels are sorted, so the nearest one brackets u. Strict comparison keeps
  // the lower level on exact ties.
  const auto it = std::lower_bound(levels.begin(), levels.end(), u,
                                   [](float level, double v) { return level < v; });
  if (it == levels.begin()) return 0;
  if (it == levels.end()) return static_cast<uint8_t>(levels.size() - 1);
  const auto hi = static_cast<std::size_t>(it - levels.begin());
  const std::size_t lo = hi - 1;
  const double d_lo = u - static_cast<double>(levels[lo]);
  const double d_hi = static_cast<double>(levels[hi]) - u;
  return static_cast<uint8_t>(d_hi < d_lo ? hi : lo);
}

uint8_t codebook_zero_code(Codebook book) { return nearest_level(book, 0.0); }

QuantizedTensor quantize(std::span<const float> dense, uint64_t rows, uint64_t cols,
                         uint32_t block_size, Codebook book) {
  if (block_size == 0) throw Error("quantize: block size must be positive");
  if (dense.size() != rows * cols) {
    throw Error("quantize: got " + std::to_string(dense.size()) + " values for a " +
                std::to_string(rows) + "x" + std::to_string(cols) + " tensor");
  }
  QuantizedTensor q;
  q.codebook = book;
  q.block_size = block_size;
  q.n = dense.size();
  q.rows = rows;
  q.cols = cols;
  q.codes.assign((q.n + 1) / 2, 0);
  q.block_scales.resize((q.n + block_size - 1) / block_size);

  const uint8_t zero_code = codebook_zero_code(book);
  for (uint64_t blk = 0; blk < q.block_scales.size(); ++blk) {
    const uint64_t begin = blk * block_size;
    const uint64_t end = std::min<uint64_t>(q.n, begin + block_size);
    float absmax = 0.0f;
    for (uint64_t i = begin; i < end; ++i) {
      if (!std::isfinite(dense[i])) {
        throw Error("quantize: non-finite value at position " + std::to_string(i));
      }
      absmax = std::max(absmax, std::fabs(dense[i]));
    }
    q.block_scales[blk] = absmax;
    for (uint64_t i = begin; i < end; ++i) {
      const uint8_t code =
          absmax == 0.0f ? zero_code
                         : nearest_level(book, static_cast<double>(dense[i]) / absmax);
      q.codes[i / 2] |= (i % 2 == 0) ? code : static_cast<uint8_t>(code << 4);
    }
  }
  return q;
}

template <typename T>
void dequantize_into(const QuantizedTensor& q, std::span<T> out) {
  if (out.size() != q.n) throw Error("dequantize: output length mismatch");
  const auto& levels = codebook_levels(q.codebook);
  for (uint64_t i = 0; i < q.n; ++i) {
    const float scale = q.block_scales[i / q.block_size];
    out[i] = scale == 0.0f ? T(0) : static_cast<T>(levels[q.code_at(i)] * scale);
  }
}

template <typename T>
std::vector<T> dequantize(const QuantizedTensor& q) {
  std::vector<T> out(q.n);
  dequantize_into<T>(q, out);
  return out;
}

template <typename T>
Matrix<T> qforward(const QuantizedTensor& q, const DeltaSlice<T>& slice, const Matrix<T>& x) {
  if (x.cols() != q.rows) {
    throw Error("qforward: input width " + std::to_string(x.cols()) + " != weight rows " +
                std::to_string(q.rows));
  }
  check_slice(slice, q.n);
  accounting::TransientBuffer<T> w(accounting::BufferKind::kDequantized, q.n);
  dequantize_into<T>(q, w.span());
  for (std::size_t k = 0; k < slice.size(); ++k) w[slice.indices[k]] += slice.values[k];
  Matrix<T> y;
  kernels::matmul<T>(x, w.span(), q.cols, y);
  return y;
}

void write_quantized(std::ostream& out, const QuantizedTensor& q) {
  out.write(kMagic, sizeof(kMagic));
  io::write_le<uint32_t>(out, kVersion);
  io::write_le<uint32_t>(out, q.block_size);
  io::write_le<uint8_t>(out, static_cast<uint8_t>(q.codebook));
  io::write_le<uint64_t>(out, q.n);
  io::write_le<uint64_t>(out, q.rows);
  io::write_le<uint64_t>(out, q.cols);
  for (float s : q.block_scales) io::write_f32(out, s);
  out.write(reinterpret_cast<const char*>(q.codes.data()),
            static_cast<std::streamsize>(q.codes.size()));
}

QuantizedTensor read_quantized(std::istream& in) {
  const std::string magic = io::read_bytes(in, sizeof(kMagic), "quantized tensor magic");
  if (magic != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("bad quantized tensor magic");
  }
  const auto version = io::read_le<uint32_t>(in, "quantized tensor version");
  if (version != kVersion) {
    throw FormatError("unsupported quantized tensor version " + std::to_string(version));
  }
  QuantizedTensor q;
  q.block_size = io::read_le<uint32_t>(in, "block size");
  if (q.block_size == 0) throw FormatError("quantized tensor has zero block size");
  const auto book = io::read_le<uint8_t>(in, "codebook id");
  if (book != static_cast<uint8_t>(Codebook::kLinear16)) {
    throw FormatError("unknown codebook id " + std::to_string(book));
  }
  q.codebook = static_cast<Codebook>(book);
  q.n = io::read_le<uint64_t>(in, "element count");
  q.rows = io::read_le<uint64_t>(in, "rows");
  q.cols = io::read_le<uint64_t>(in, "cols");
  if (q.rows * q.cols != q.n) throw FormatError("quantized tensor shape does not match length");
  q.block_scales.resize((q.n + q.block_size - 1) / q.block_size);
  for (auto& s : q.block_scales) {
    s = io::read_f32(in, "block scales");
    if (!(s >= 0.0f)) throw FormatError("negative or NaN block scale");
  }
  const std::string codes = io::read_bytes(in, (q.n + 1) / 2, "packed codes");
  q.codes.assign(codes.begin(), codes.end());
  return q;
}

template void dequantize_into<float>(const QuantizedTensor&, std::span<float>);
template void dequantize_into<double>(const QuantizedTensor&, std::span<double>);
template std::vector<float> dequantize<float>(const QuantizedTensor&);
template std::vector<double> dequantize<double>(const QuantizedTensor&);
template Matrix<float> qforward<float>(const QuantizedTensor&, const DeltaSlice<float>&,
                                       const Matrix<float>&);
template Matrix<double> qforward<double>(const QuantizedTensor&, const DeltaSlice<double>&,
                                         const Matrix<double>&);

}  // namespace spiel
