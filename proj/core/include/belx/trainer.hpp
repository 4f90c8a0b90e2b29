#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "belx/contrast.hpp"
#include "belx/encoder.hpp"
#include "belx/projection.hpp"
#include "belx/wikidata.hpp"

namespace belx {

/// N items: alias strings with their group labels (QIDs) and raw features.
struct TrainingBatch {
  std::vector<std::string> aliases;
  std::vector<std::int64_t> labels;
  std::vector<SparseFeatures> features;  // filled by featurize()

  std::size_t size() const noexcept { return aliases.size(); }
};

/// One epoch of batches. Eligible groups (>= 2 distinct aliases) are visited
/// in a permutation seeded by (seed, epoch); each batch holds batch_size / 2
/// groups with two distinct aliases drawn from each, shuffled. A trailing
/// partial batch is dropped. Throws Error(kConfig) when batch_size is odd or
/// fewer than batch_size / 2 groups are eligible.
std::vector<TrainingBatch> sample_batches(const std::vector<PositiveGroup>& groups,
                                          std::size_t batch_size, std::uint64_t seed,
                                          std::size_t epoch = 0);

void featurize(TrainingBatch& batch, const EncoderConfig& config);

struct TrainHyperparams {
  std::size_t batch_size = 256;
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  std::size_t epochs = 5;
  MSLossParams loss;
  std::uint64_t seed = 0;
  bool mining = true;       // false: loss over the unfiltered in-batch sets
  double init_scale = 0.1;  // uniform(-s, s) initial weights
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<std::filesystem::path> checkpoint;  // written after each epoch

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  double mean_loss = 0.0;
  std::size_t surviving_triplets = 0;
};

struct TrainingReport {
  TrainHyperparams hyperparams;
  std::size_t eligible_groups = 0;
  std::size_t steps = 0;
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  ProjectionHead head;
  TrainingReport report;
};

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
class AdamW {
 public:
  AdamW(std::size_t parameters, double lr, double weight_decay, double beta1,
        double beta2, double eps);

  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// featurize -> project -> normalize -> mine -> MS loss -> gradient -> AdamW.
/// Deterministic given the seed. A non-finite loss aborts with
/// Error(kNumeric) naming the last good checkpoint.
TrainResult train_projection(const std::vector<PositiveGroup>& groups,
                             const EncoderConfig& encoder_config,
                             const TrainHyperparams& hyperparams,
                             const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace belx
