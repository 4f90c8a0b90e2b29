#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace belx {

/// Sparse raw-feature vector; indices strictly ascending.
struct SparseFeatures {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const noexcept { return index.size(); }
};

/// Linear map z = W^T x + b from F raw features to d dimensions.
/// Weights are stored F x d row-major so a sparse input touches whole rows.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t input_dim, std::size_t output_dim);

  /// Uniform(-scale, scale) weights, zero bias; bit-reproducible from seed.
  static ProjectionHead random(std::size_t input_dim, std::size_t output_dim,
                               std::uint64_t seed, double scale);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }

  std::span<double> weights() noexcept { return weights_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> bias() noexcept { return bias_; }
  std::span<const double> bias() const noexcept { return bias_; }

  void forward(const SparseFeatures& x, std::span<double> out) const;
  std::vector<double> forward(const SparseFeatures& x) const;

  bool all_finite() const noexcept;

  /// "BELXHEAD", u32 F, u32 d, float32 row-major weights, float32 bias.
  void save(const std::filesystem::path& path) const;
  static ProjectionHead load(const std::filesystem::path& path);

 private:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

}  // namespace belx
