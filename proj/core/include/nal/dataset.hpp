#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "nal/loss.hpp"
#include "nal/tensor.hpp"

namespace nal {

// Feature matrix plus labels. Single-label datasets have attributes == 0 and
// one label per sample; multi-attribute datasets store N x K labels row-major.
struct Dataset {
  std::size_t num_samples = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;  // N x D, row-major
  std::uint32_t classes = 0;     // labels lie in [0, classes)
  std::uint32_t attributes = 0;
  std::vector<Label> given_labels;
  std::optional<std::vector<Label>> true_labels;

  std::size_t label_columns() const { return attributes == 0 ? 1 : attributes; }
  Label given(std::size_t n, std::size_t k = 0) const { return given_labels[n * label_columns() + k]; }
  Label truth(std::size_t n, std::size_t k = 0) const { return (*true_labels)[n * label_columns() + k]; }
  std::vector<Label> given_column(std::size_t k = 0) const;
  std::vector<Label> true_column(std::size_t k = 0) const;
  void set_given_column(std::size_t k, std::span<const Label> labels);

  // Features as [N, sample_shape...]; sample_shape must hold D values.
  Tensor feature_tensor(const Shape& sample_shape) const;

  // Samples at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;

  // Throws DataError when an invariant is violated.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// NLD1 little-endian binary format:
//   "NLD1" u32 version u32 N u32 D u32 C u32 K u8 has_true_labels
//   f64[N*D] features, u32[N*max(K,1)] given labels, [u32[...] true labels]
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

// CSV with a header row: feature columns, then `given_label`, then an
// optional `true_label` column. The class count is 1 + the largest label.
Dataset import_csv(const std::filesystem::path& path);

}  // namespace nal
