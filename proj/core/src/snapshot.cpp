#include "nal/snapshot.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "byte_io.hpp"
#include "nal/errors.hpp"

namespace nal {
namespace {

constexpr char kMagic[4] = {'N', 'L', 'M', '1'};

}  // namespace

std::vector<std::uint8_t> encode_model(const MultiHeadNetwork& model, std::span<const NAModel> na_models) {
  if (na_models.size() != model.attribute_count()) {
    throw ConfigError("need one noise-attention model per attribute");
  }
  detail::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kModelFormatVersion);
  const std::string arch = model.architecture();
  w.u32(static_cast<std::uint32_t>(arch.size()));
  w.bytes(arch.data(), arch.size());
  const auto params = model.flat_parameters();
  w.u64(params.size());
  for (double v : params) w.f64(v);
  w.u32(static_cast<std::uint32_t>(na_models.size()));
  for (const auto& na : na_models) {
    w.u32(static_cast<std::uint32_t>(na.classes()));
    w.u32(static_cast<std::uint32_t>(na.max_units()));
    w.u32(static_cast<std::uint32_t>(na.active_count()));
    for (std::size_t m = 1; m < na.active_count(); ++m) {
      const auto& unit = na.unit(m);
      w.f64(unit.decay);
      for (double v : unit.q.values()) w.f64(v);
    }
  }
  return w.take();
}

void decode_model(std::span<const std::uint8_t> bytes, MultiHeadNetwork& model, std::vector<NAModel>& na_models) {
  detail::Reader r(bytes);
  const auto magic = r.raw(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad magic at offset 0: not an NLM1 model");
  const std::uint32_t version = r.u32("version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model version " + std::to_string(version) + " at offset 4");
  }
  const std::size_t arch_at = r.offset();
  const std::uint32_t arch_len = r.u32("architecture length");
  const auto arch_bytes = r.raw(arch_len, "architecture");
  const std::string arch(arch_bytes.begin(), arch_bytes.end());
  if (arch != model.architecture()) {
    throw FormatError("architecture at offset " + std::to_string(arch_at) + " is '" + arch + "', expected '" +
                      model.architecture() + "'");
  }
  const std::size_t params_at = r.offset();
  const std::uint64_t count = r.u64("parameter count");
  if (count != model.parameter_count()) {
    throw FormatError("parameter count " + std::to_string(count) + " at offset " + std::to_string(params_at) +
                      " does not match the model (" + std::to_string(model.parameter_count()) + ")");
  }
  std::vector<double> params(count);
  for (auto& v : params) v = r.f64("parameters");

  const std::size_t k_at = r.offset();
  const std::uint32_t k_count = r.u32("attribute count");
  if (k_count != model.attribute_count()) {
    throw FormatError("attribute count " + std::to_string(k_count) + " at offset " + std::to_string(k_at) +
                      " does not match the model");
  }
  std::vector<NAModel> loaded;
  for (std::uint32_t k = 0; k < k_count; ++k) {
    const std::size_t at = r.offset();
    const std::uint32_t c = r.u32("class count");
    const std::uint32_t max_units = r.u32("unit limit");
    const std::uint32_t active = r.u32("unit count");
    if (c != model.classes(k) || max_units < 1 || active < 1 || active > max_units) {
      throw FormatError("invalid noise-attention header for attribute " + std::to_string(k) + " at offset " +
                        std::to_string(at));
    }
    NAModel na(c, max_units);
    for (std::uint32_t m = 1; m < active; ++m) {
      const double decay = r.f64("unit decay");
      std::vector<double> q(static_cast<std::size_t>(c) * c);
      for (auto& v : q) v = r.f64("unit matrix");
      na.add_unit(decay, 0.0);
      na.set_unit(m, Tensor({c, c}, std::move(q)), decay);
    }
    loaded.push_back(std::move(na));
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes at offset " + std::to_string(r.offset()));
  }
  model.set_flat_parameters(params);
  na_models = std::move(loaded);
}

void save_model(const std::filesystem::path& path, const MultiHeadNetwork& model, std::span<const NAModel> na_models) {
  const auto bytes = encode_model(model, na_models);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void load_model(const std::filesystem::path& path, MultiHeadNetwork& model, std::vector<NAModel>& na_models) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    decode_model(bytes, model, na_models);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace nal
