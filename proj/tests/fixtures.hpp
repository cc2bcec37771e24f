#pragma once

// Synthetic fixtures and scratch directories shared by the unit and
// acceptance suites.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "mrmbench/repr_store.hpp"

namespace mrmbench::testing {

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mrmbench_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct Labeled {
  RepresentationMatrix reps;
  std::vector<Label> labels;
};

/// Two isotropic Gaussian classes with means +offset*1 (label 0) and
/// -offset*1 (label 1), alternating labels.
inline Labeled two_gaussians(std::size_t n, std::size_t d, double offset, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Labeled out{RepresentationMatrix(n, d), std::vector<Label>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = static_cast<Label>(i % 2);
    const double mean = out.labels[i] == 0 ? offset : -offset;
    for (std::size_t j = 0; j < d; ++j) out.reps(i, j) = static_cast<float>(mean + noise(rng));
  }
  return out;
}

inline RepresentationMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  RepresentationMatrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = static_cast<float>(u(rng));
  return m;
}

inline std::vector<SampleMeta> simple_meta(std::size_t n, std::size_t k, Split split = Split::train) {
  std::vector<SampleMeta> meta;
  for (std::size_t i = 0; i < n; ++i) meta.push_back({"s" + std::to_string(i), static_cast<Label>(i % k), split});
  return meta;
}

}  // namespace mrmbench::testing
