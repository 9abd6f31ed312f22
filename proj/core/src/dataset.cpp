#include "nal/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "byte_io.hpp"
#include "nal/errors.hpp"

namespace nal {
namespace {

using detail::Reader;
using detail::Writer;

constexpr char kMagic[4] = {'N', 'L', 'D', '1'};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw DataError(std::string(what) + " does not fit the NLD1 header");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<Label> Dataset::given_column(std::size_t k) const {
  std::vector<Label> out(num_samples);
  for (std::size_t n = 0; n < num_samples; ++n) out[n] = given(n, k);
  return out;
}

std::vector<Label> Dataset::true_column(std::size_t k) const {
  if (!true_labels) throw DataError("dataset has no true labels");
  std::vector<Label> out(num_samples);
  for (std::size_t n = 0; n < num_samples; ++n) out[n] = truth(n, k);
  return out;
}

void Dataset::set_given_column(std::size_t k, std::span<const Label> labels) {
  if (labels.size() != num_samples) throw DataError("label column has the wrong length");
  for (std::size_t n = 0; n < num_samples; ++n) given_labels[n * label_columns() + k] = labels[n];
}

Tensor Dataset::feature_tensor(const Shape& sample_shape) const {
  if (shape_size(sample_shape) != feature_dim) {
    throw ConfigError("sample shape " + shape_to_string(sample_shape) + " does not hold " +
                      std::to_string(feature_dim) + " features");
  }
  Shape shape = sample_shape;
  shape.insert(shape.begin(), num_samples);
  return Tensor(std::move(shape), features);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_samples = indices.size();
  out.feature_dim = feature_dim;
  out.classes = classes;
  out.attributes = attributes;
  const std::size_t cols = label_columns();
  out.features.reserve(indices.size() * feature_dim);
  out.given_labels.reserve(indices.size() * cols);
  if (true_labels) out.true_labels.emplace();
  for (std::size_t n : indices) {
    if (n >= num_samples) throw DataError("subset index out of range");
    const auto row = features.begin() + static_cast<std::ptrdiff_t>(n * feature_dim);
    out.features.insert(out.features.end(), row, row + static_cast<std::ptrdiff_t>(feature_dim));
    for (std::size_t k = 0; k < cols; ++k) {
      out.given_labels.push_back(given(n, k));
      if (true_labels) out.true_labels->push_back(truth(n, k));
    }
  }
  return out;
}

void Dataset::validate() const {
  if (feature_dim == 0) throw DataError("dataset has no features (D = 0)");
  if (features.size() != num_samples * feature_dim) throw DataError("feature matrix size does not match N x D");
  if (classes < 1) throw DataError("dataset needs a positive class count");
  const std::size_t cols = label_columns();
  if (given_labels.size() != num_samples * cols) throw DataError("given label count does not match N");
  auto check = [&](const std::vector<Label>& labels, const char* what) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= classes) {
        throw DataError(std::string(what) + " label " + std::to_string(labels[i]) + " at sample " +
                        std::to_string(i / cols) + " is outside [0, " + std::to_string(classes) + ")");
      }
    }
  };
  check(given_labels, "given");
  if (true_labels) {
    if (true_labels->size() != given_labels.size()) throw DataError("true and given labels differ in length");
    check(*true_labels, "true");
  }
}

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  d.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kDatasetFormatVersion);
  w.u32(checked_u32(d.num_samples, "N"));
  w.u32(checked_u32(d.feature_dim, "D"));
  w.u32(d.classes);
  w.u32(d.attributes);
  w.u8(d.true_labels ? 1 : 0);
  for (double v : d.features) w.f64(v);
  for (Label l : d.given_labels) w.u32(l);
  if (d.true_labels) {
    for (Label l : *d.true_labels) w.u32(l);
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.raw(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad magic at offset 0: not an NLD1 file");
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported NLD1 version " + std::to_string(version) + " at offset 4");
  }
  Dataset d;
  d.num_samples = r.u32("N");
  d.feature_dim = r.u32("D");
  d.classes = r.u32("C");
  d.attributes = r.u32("K");
  const std::size_t flag_offset = r.offset();
  const std::uint8_t has_true = r.u8("has_true_labels");
  if (has_true > 1) throw FormatError("invalid has_true_labels flag at offset " + std::to_string(flag_offset));
  const std::size_t cols = d.label_columns();
  const std::size_t per_sample = d.feature_dim * 8 + cols * 4 * (has_true ? 2 : 1);
  if (d.num_samples > r.remaining() / per_sample) {
    throw FormatError("truncated file: header at offset 8 declares " + std::to_string(d.num_samples) +
                      " samples but only " + std::to_string(r.remaining()) + " payload bytes follow offset " +
                      std::to_string(r.offset()));
  }
  const std::size_t n_features = d.num_samples * d.feature_dim;
  const std::size_t n_labels = d.num_samples * cols;
  d.features.resize(n_features);
  for (double& v : d.features) v = r.f64("feature");
  d.given_labels.resize(n_labels);
  for (Label& l : d.given_labels) l = r.u32("given label");
  if (has_true) {
    d.true_labels.emplace(n_labels);
    for (Label& l : *d.true_labels) l = r.u32("true label");
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after offset " + std::to_string(r.offset()));
  }
  try {
    d.validate();
  } catch (const DataError& e) {
    throw FormatError(std::string("invalid NLD1 contents: ") + e.what());
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_dataset(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Dataset import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing CSV header");
  const auto header = split(line);
  const auto given_it = std::find(header.begin(), header.end(), "given_label");
  if (given_it == header.end()) throw FormatError(path.string() + ": CSV header lacks a given_label column");
  const std::size_t d = static_cast<std::size_t>(given_it - header.begin());
  const bool has_true = header.size() == d + 2 && header[d + 1] == "true_label";
  if (header.size() != d + 1 && !has_true) {
    throw FormatError(path.string() + ": expected only an optional true_label column after given_label");
  }
  Dataset out;
  out.feature_dim = d;
  if (has_true) out.true_labels.emplace();
  Label max_label = 0;
  std::size_t line_no = 1;
  auto parse_label = [&](const std::string& s) {
    std::size_t used = 0;
    const unsigned long v = std::stoul(s, &used);
    if (used != s.size() || v > UINT32_MAX) throw std::invalid_argument(s);
    max_label = std::max(max_label, static_cast<Label>(v));
    return static_cast<Label>(v);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    try {
      for (std::size_t j = 0; j < d; ++j) out.features.push_back(std::stod(cells[j]));
      out.given_labels.push_back(parse_label(cells[d]));
      if (has_true) out.true_labels->push_back(parse_label(cells[d + 1]));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed value");
    }
    ++out.num_samples;
  }
  out.classes = max_label + 1;
  out.validate();
  return out;
}

}  // namespace nal
