#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nal/noise_attention.hpp"

namespace nal {

// C rows of C comma-separated values; row j, column i holds q(j, i). Values
// are written in shortest round-trip form, so reading them back is exact.
std::string q_to_csv(const Tensor& q);
Tensor q_from_csv(const std::string& text);

// ASCII PGM (P2, maxval 255), pixel (row j, column i) = round(255 * q(j, i)).
std::string q_to_pgm(const Tensor& q);

// Writes <prefix>unit<m>.csv and .pgm for every unit, m counted from 1.
// Returns the written paths.
std::vector<std::filesystem::path> export_q(const NAModel& model, const std::filesystem::path& out_dir,
                                            const std::string& prefix = "");

}  // namespace nal
