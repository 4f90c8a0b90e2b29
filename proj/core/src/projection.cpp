#include "belx/projection.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "belx/error.hpp"
#include "belx/random.hpp"
#include "binary_io.hpp"

namespace belx {

ProjectionHead::ProjectionHead(std::size_t input_dim, std::size_t output_dim)
    : input_dim_(input_dim),
      output_dim_(output_dim),
      weights_(input_dim * output_dim, 0.0),
      bias_(output_dim, 0.0) {
  if (input_dim == 0 || output_dim == 0) {
    throw Error(ErrorKind::kPrecondition, "projection head needs positive dimensions");
  }
}

ProjectionHead ProjectionHead::random(std::size_t input_dim, std::size_t output_dim,
                                      std::uint64_t seed, double scale) {
  ProjectionHead head(input_dim, output_dim);
  std::mt19937_64 rng(seed);
  for (auto& w : head.weights_) w = scale * (2.0 * uniform01(rng) - 1.0);
  return head;
}

void ProjectionHead::forward(const SparseFeatures& x, std::span<double> out) const {
  if (out.size() != output_dim_) {
    throw Error(ErrorKind::kPrecondition, "projection output size mismatch");
  }
  std::copy(bias_.begin(), bias_.end(), out.begin());
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    const auto f = x.index[k];
    if (f >= input_dim_) {
      throw Error(ErrorKind::kPrecondition, "feature index out of range");
    }
    const double v = x.value[k];
    const double* row = weights_.data() + static_cast<std::size_t>(f) * output_dim_;
    for (std::size_t j = 0; j < output_dim_; ++j) out[j] += v * row[j];
  }
}

std::vector<double> ProjectionHead::forward(const SparseFeatures& x) const {
  std::vector<double> out(output_dim_);
  forward(x, out);
  return out;
}

bool ProjectionHead::all_finite() const noexcept {
  for (const double w : weights_) {
    if (!std::isfinite(w)) return false;
  }
  for (const double b : bias_) {
    if (!std::isfinite(b)) return false;
  }
  return true;
}

void ProjectionHead::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  binary::put_magic(out, "BELXHEAD");
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(input_dim_));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(output_dim_));
  for (const double w : weights_) binary::put<float>(out, static_cast<float>(w));
  for (const double b : bias_) binary::put<float>(out, static_cast<float>(b));
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

ProjectionHead ProjectionHead::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  binary::expect_magic(in, "BELXHEAD");
  const auto f = binary::get<std::uint32_t>(in, "input dimension");
  const auto d = binary::get<std::uint32_t>(in, "output dimension");
  ProjectionHead head(f, d);
  for (auto& w : head.weights_) w = binary::get<float>(in, "weights");
  for (auto& b : head.bias_) b = binary::get<float>(in, "bias");
  if (!head.all_finite()) {
    throw Error(ErrorKind::kFormat, path.string() + " holds non-finite parameters");
  }
  return head;
}

}  // namespace belx
