#include "belx/trainer.hpp"

#include <cmath>
#include <random>

#include "belx/error.hpp"
#include "belx/random.hpp"

namespace belx {

void TrainHyperparams::validate() const {
  loss.validate();
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw Error(ErrorKind::kConfig, "batch size must be even and >= 2");
  }
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfig, "learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::kConfig, "weight decay must be >= 0");
  if (!(init_scale > 0.0)) throw Error(ErrorKind::kConfig, "init scale must be > 0");
}

std::vector<TrainingBatch> sample_batches(const std::vector<PositiveGroup>& groups,
                                          std::size_t batch_size, std::uint64_t seed,
                                          std::size_t epoch) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw Error(ErrorKind::kConfig, "batch size must be even and >= 2");
  }
  std::vector<const PositiveGroup*> eligible;
  for (const auto& g : groups) {
    if (!g.single_alias()) eligible.push_back(&g);
  }
  const std::size_t per_batch = batch_size / 2;
  if (eligible.size() < per_batch) {
    throw Error(ErrorKind::kConfig,
                "batch size " + std::to_string(batch_size) + " needs " +
                    std::to_string(per_batch) + " groups with >= 2 aliases, only " +
                    std::to_string(eligible.size()) + " available (short by " +
                    std::to_string(per_batch - eligible.size()) + ")");
  }

  std::mt19937_64 rng(mix_seed(seed, epoch));
  shuffle(std::span<const PositiveGroup*>(eligible), rng);

  std::vector<TrainingBatch> batches;
  for (std::size_t start = 0; start + per_batch <= eligible.size(); start += per_batch) {
    std::vector<std::pair<std::string, std::int64_t>> items;
    items.reserve(batch_size);
    for (std::size_t g = start; g < start + per_batch; ++g) {
      const auto& members = eligible[g]->members;
      const auto m = members.size();
      const auto a = static_cast<std::size_t>(uniform_below(rng, m));
      auto b = static_cast<std::size_t>(uniform_below(rng, m - 1));
      if (b >= a) ++b;
      const auto label = static_cast<std::int64_t>(eligible[g]->qid);
      items.emplace_back(members[a].alias, label);
      items.emplace_back(members[b].alias, label);
    }
    shuffle(std::span(items), rng);
    TrainingBatch batch;
    for (auto& [alias, label] : items) {
      batch.aliases.push_back(std::move(alias));
      batch.labels.push_back(label);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void featurize(TrainingBatch& batch, const EncoderConfig& config) {
  batch.features.clear();
  batch.features.reserve(batch.size());
  for (const auto& a : batch.aliases) batch.features.push_back(hashed_ngram_features(a, config));
}

AdamW::AdamW(std::size_t parameters, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(parameters, 0.0), v_(parameters, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorKind::kPrecondition, "AdamW parameter count mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    const double theta = params[k];
    params[k] = theta - lr_ * (m_hat / (std::sqrt(v_hat) + eps_)) - lr_ * wd_ * theta;
  }
}

TrainResult train_projection(const std::vector<PositiveGroup>& groups,
                             const EncoderConfig& encoder_config,
                             const TrainHyperparams& hp,
                             const std::function<void(const EpochStats&)>& on_epoch) {
  hp.validate();
  encoder_config.validate();
  const std::size_t features = encoder_config.buckets;
  const std::size_t dim = encoder_config.dimension;

  TrainResult result{
      ProjectionHead::random(features, dim, mix_seed(hp.seed, 0x4845414400ULL), hp.init_scale),
      TrainingReport{}};
  result.report.hyperparams = hp;
  for (const auto& g : groups) {
    if (!g.single_alias()) ++result.report.eligible_groups;
  }
  if (hp.epochs == 0) return result;

  auto& head = result.head;
  AdamW w_opt(head.weights().size(), hp.learning_rate, hp.weight_decay, hp.adam_beta1,
              hp.adam_beta2, hp.adam_eps);
  AdamW b_opt(head.bias().size(), hp.learning_rate, hp.weight_decay, hp.adam_beta1,
              hp.adam_beta2, hp.adam_eps);
  std::vector<double> w_grad(head.weights().size());
  std::vector<double> b_grad(head.bias().size());
  std::string last_good = "initial weights (no checkpoint written)";

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    auto batches = sample_batches(groups, hp.batch_size, hp.seed, epoch);
    EpochStats stats;
    stats.epoch = epoch + 1;
    double loss_sum = 0.0;

    for (auto& batch : batches) {
      featurize(batch, encoder_config);
      const std::size_t n = batch.size();
      Matrix z(n, dim);
      for (std::size_t i = 0; i < n; ++i) head.forward(batch.features[i], z.row(i));

      IndexSets sets;
      if (hp.mining) {
        auto mined = mine_hard_triplets(normalize_rows(z), batch.labels,
                                        hp.loss.margin_lambda);
        stats.surviving_triplets += mined.triplets.size();
        sets = std::move(mined.mined);
      } else {
        sets = build_index_sets(batch.labels);
      }

      LossAndGrad lg;
      try {
        lg = ms_loss_grad(z, sets, hp.loss);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric && e.kind() != ErrorKind::kDegenerateVector) throw;
        throw Error(ErrorKind::kNumeric,
                    "training aborted at epoch " + std::to_string(epoch + 1) + ", step " +
                        std::to_string(result.report.steps + 1) + ": " + e.what() +
                        "; last good checkpoint: " + last_good);
      }
      loss_sum += lg.loss;

      std::fill(w_grad.begin(), w_grad.end(), 0.0);
      std::fill(b_grad.begin(), b_grad.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto dz = lg.grad.row(i);
        const auto& x = batch.features[i];
        for (std::size_t k = 0; k < x.nnz(); ++k) {
          double* row = w_grad.data() + static_cast<std::size_t>(x.index[k]) * dim;
          for (std::size_t j = 0; j < dim; ++j) row[j] += x.value[k] * dz[j];
        }
        for (std::size_t j = 0; j < dim; ++j) b_grad[j] += dz[j];
      }
      w_opt.step(head.weights(), w_grad);
      b_opt.step(head.bias(), b_grad);
      ++result.report.steps;
      ++stats.batches;
    }
    stats.mean_loss = stats.batches == 0 ? 0.0 : loss_sum / static_cast<double>(stats.batches);
    if (!head.all_finite()) {
      throw Error(ErrorKind::kNumeric, "non-finite parameters after epoch " +
                                           std::to_string(epoch + 1) +
                                           "; last good checkpoint: " + last_good);
    }
    if (hp.checkpoint) {
      head.save(*hp.checkpoint);
      last_good = hp.checkpoint->string() + " (epoch " + std::to_string(epoch + 1) + ")";
    }
    result.report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace belx
