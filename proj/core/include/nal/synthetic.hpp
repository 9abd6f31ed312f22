#pragma once

#include <cstdint>
#include <vector>

#include "nal/dataset.hpp"

namespace nal {

struct SyntheticSpec {
  enum class Kind { GaussianBlobs, TwoMoons, ImagePatches };

  Kind kind = Kind::GaussianBlobs;
  std::size_t classes = 3;
  std::size_t dim = 2;          // GaussianBlobs feature dimension
  double sigma = 1.0;           // per-coordinate noise std-dev
  double separation = 6.0;      // closest pair of blob centers, in units of sigma
  std::size_t height = 8;       // ImagePatches
  std::size_t width = 8;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;
};

struct SyntheticSplit {
  Dataset train;
  Dataset test;
};

// Deterministic per seed. Labels are assigned round-robin (class n mod C), so
// class counts in each split differ by at most one; given labels start equal
// to the true labels.
SyntheticSplit generate_synthetic(const SyntheticSpec& spec);

// Blob centers: a regular C-gon in the first two coordinates whose adjacent
// vertices are separation * sigma apart (a line for D = 1).
std::vector<std::vector<double>> blob_centers(std::size_t classes, std::size_t dim, double sigma, double separation);

// K independent attributes; attribute k occupies two feature coordinates and
// draws its label uniformly and independently of the others.
struct MultiAttributeSpec {
  std::vector<std::size_t> classes;
  std::vector<double> separation;  // per attribute, in units of sigma
  double sigma = 1.0;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;
};

SyntheticSplit generate_multi_attribute(const MultiAttributeSpec& spec);

}  // namespace nal
