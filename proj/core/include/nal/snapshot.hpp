#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nal/multi_attribute.hpp"
#include "nal/noise_attention.hpp"

namespace nal {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// NLM1 little-endian model snapshot:
//   "NLM1" u32 version u32 len, architecture text (len bytes)
//   u64 P, f64[P] parameters
//   u32 K, then per attribute: u32 C u32 max_units u32 active,
//     and for each learnable unit: f64 decay, f64[C*C] q (row-major)
std::vector<std::uint8_t> encode_model(const MultiHeadNetwork& model, std::span<const NAModel> na_models);

// Loads into an already built model. The stored architecture text must match
// model.architecture(); a mismatch, truncation or bad header raises
// FormatError and leaves `model` and `na_models` untouched.
void decode_model(std::span<const std::uint8_t> bytes, MultiHeadNetwork& model, std::vector<NAModel>& na_models);

void save_model(const std::filesystem::path& path, const MultiHeadNetwork& model, std::span<const NAModel> na_models);
void load_model(const std::filesystem::path& path, MultiHeadNetwork& model, std::vector<NAModel>& na_models);

}  // namespace nal
