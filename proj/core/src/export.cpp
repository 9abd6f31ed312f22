#include "nal/export.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nal/errors.hpp"

namespace nal {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

std::string q_to_csv(const Tensor& q) {
  if (q.rank() != 2 || q.dim(0) != q.dim(1)) throw ConfigError("unit matrix must be square");
  const std::size_t c = q.dim(0);
  std::string out;
  char buf[32];
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      if (i) out += ',';
      const auto res = std::to_chars(buf, buf + sizeof buf, q.data()[j * c + i]);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

Tensor q_from_csv(const std::string& text) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      double v = 0.0;
      const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
      if (res.ec != std::errc() || res.ptr != line.data() + end) {
        throw FormatError("row " + std::to_string(rows + 1) + ": bad value '" + line.substr(pos, end - pos) + "'");
      }
      values.push_back(v);
      ++count;
      if (end == line.size()) break;
      pos = end + 1;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw FormatError("row " + std::to_string(rows + 1) + " has " + std::to_string(count) + " values");
    ++rows;
  }
  if (rows == 0 || rows != cols) throw FormatError("expected a square matrix, got " + std::to_string(rows) + " rows");
  return Tensor({rows, cols}, std::move(values));
}

std::string q_to_pgm(const Tensor& q) {
  if (q.rank() != 2 || q.dim(0) != q.dim(1)) throw ConfigError("unit matrix must be square");
  const std::size_t c = q.dim(0);
  std::string out = "P2\n" + std::to_string(c) + " " + std::to_string(c) + "\n255\n";
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      if (i) out += ' ';
      const double v = std::clamp(q.data()[j * c + i], 0.0, 1.0);
      out += std::to_string(static_cast<int>(std::lround(255.0 * v)));
    }
    out += '\n';
  }
  return out;
}

std::vector<std::filesystem::path> export_q(const NAModel& model, const std::filesystem::path& out_dir,
                                            const std::string& prefix) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t m = 0; m < model.active_count(); ++m) {
    const std::string stem = prefix + "unit" + std::to_string(m + 1);
    const auto csv = out_dir / (stem + ".csv");
    const auto pgm = out_dir / (stem + ".pgm");
    write_text(csv, q_to_csv(model.unit(m).q));
    write_text(pgm, q_to_pgm(model.unit(m).q));
    written.push_back(csv);
    written.push_back(pgm);
  }
  return written;
}

}  // namespace nal
