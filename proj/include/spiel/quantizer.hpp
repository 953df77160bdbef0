// SPDX-License-Identifier: Apache-2.0
//
// Block-wise 4-bit quantization of frozen base weights.
//
// Each block of `block_size` consecutive elements is scaled by its absolute
// maximum and every element is snapped to the nearest level of a 16-entry
// codebook on [-1, 1]. Codes are packed two per byte, element 2i in the low
// nibble and 2i+1 in the high nibble.

#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "spiel/delta_slice.hpp"
#include "spiel/matrix.hpp"

namespace spiel {

enum class Codebook : uint8_t {
  // 16 evenly spaced levels, -1 + 2k/15 for k = 0..15.
  kLinear16 = 0,
};

inline constexpr uint32_t kDefaultQuantBlock = 64;

const std::array<float, 16>& codebook_levels(Codebook book);

// Largest distance between adjacent levels (2/15 for linear16).
double codebook_max_gap(Codebook book);

// Code used for zero-scale blocks: the level nearest 0, ties toward the lower.
uint8_t codebook_zero_code(Codebook book);

// Index of the level nearest to `u`; ties go to the lower level.
uint8_t nearest_level(Codebook book, double u);

struct QuantizedTensor {
  std::vector<uint8_t> codes;
  std::vector<float> block_scales;
  Codebook codebook = Codebook::kLinear16;
  uint32_t block_size = kDefaultQuantBlock;
  uint64_t n = 0;
  uint64_t rows = 0;
  uint64_t cols = 0;

  uint8_t code_at(uint64_t i) const {
    const uint8_t byte = codes[i / 2];
    return (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
  }
  uint64_t num_blocks() const { return block_scales.size(); }

  bool operator==(const QuantizedTensor&) const = default;
};

// Quantizes `dense` (length rows*cols). Throws on non-finite input or a
// zero block size.
QuantizedTensor quantize(std::span<const float> dense, uint64_t rows, uint64_t cols,
                         uint32_t block_size = kDefaultQuantBlock,
                         Codebook book = Codebook::kLinear16);

// value = codebook[code] * block_scale, computed in f32.
template <typename T>
void dequantize_into(const QuantizedTensor& q, std::span<T> out);

template <typename T>
std::vector<T> dequantize(const QuantizedTensor& q);

// Y = X (dequant(q) + scatter(slice)), with q shaped rows=d_in, cols=d_out.
// The dequantized base is a counted transient.
template <typename T>
Matrix<T> qforward(const QuantizedTensor& q, const DeltaSlice<T>& slice, const Matrix<T>& x);

// "SPQT" blob: magic, version u32, block u32, codebook u8, n u64, rows u64,
// cols u64, scales f32[], packed codes.
void write_quantized(std::ostream& out, const QuantizedTensor& q);
QuantizedTensor read_quantized(std::istream& in);

}  // namespace spiel
