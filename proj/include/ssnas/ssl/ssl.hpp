#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssnas/archspace/archspace.hpp"
#include "ssnas/common/rng.hpp"
#include "ssnas/diffcore/optim.hpp"
#include "ssnas/encoding/encoding.hpp"
#include "ssnas/gnnmodels/gnnmodels.hpp"

namespace ssnas::ssl {

using diffcore::Matrix;
using diffcore::Var;

struct ContrastiveConfig {
  // N: architectures per batch.
  std::size_t batch_size = 512;
  // M: anchors drawn per batch (without replacement), M <= N.
  std::size_t draws = 256;
  double temperature = 0.07;
  double lambda = 0.5;
  bool drop_last = true;
  // Penalise squared off-diagonal Gram entries instead of their signed sum.
  bool squared_reg = false;

  void validate() const;
};

struct ContrastiveDraw {
  std::size_t anchor = 0;
  std::size_t min_ged = 0;
  // Anchor first, then every j with GED(anchor, j) == min_ged in batch order.
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  // GED from the anchor to every batch member.
  std::vector<std::size_t> geds;
};

struct ContrastiveBatchPlan {
  std::size_t batch_size = 0;
  std::vector<ContrastiveDraw> draws;
};

// Throws when the batch has fewer than 2 members, draws is outside
// [1, batch], or an anchor has a zero-GED partner (duplicate encodings; the
// caller must dedupe).
ContrastiveBatchPlan plan_contrastive_batch(std::span<const encoding::PositionAwareEncoding* const> batch,
                                            std::size_t draws, Rng& rng);
ContrastiveBatchPlan plan_contrastive_batch(std::span<const archspace::Architecture> batch, std::size_t draws,
                                            Rng& rng);

struct ContrastiveLoss {
  // (1/M) sum_t l_t, before the center regularizer.
  Var loss;
  // M x d matrix of L2-normalised centers.
  Var centers;
};

// For each draw: center = normalised mean of the normalised positive
// projections; every positive p contributes
//   -log(exp(s_pc) / (exp(s_pc) + sum_n exp(s_nc))),  s_xc = cos(x, c) / tau.
// Throws on a zero-norm embedding row.
ContrastiveLoss central_contrastive_loss(Var embeddings, const ContrastiveBatchPlan& plan, double temperature);

// 1/2 * sum of the off-diagonal entries of E E^T (or of their squares).
Var center_regularization(Var centers, bool squared = false);
double center_regularization(const Matrix& centers, bool squared = false);

struct TrainHistory {
  std::vector<double> epoch_loss;
};

// GED regression: every epoch draws |archs| pairs uniformly with
// replacement and fits frl_forward to their nGED with MSE, Adam and the
// configured schedule.
TrainHistory pretrain_regression(std::span<const archspace::Architecture> archs, gnnmodels::ModelFrl& model,
                                 const diffcore::TrainConfig& config, Rng& rng);

// Central contrastive pretraining: shuffled batches of N architectures, one
// optimizer step per batch on loss + lambda * center_regularization.
TrainHistory pretrain_central_contrastive(std::span<const archspace::Architecture> archs,
                                          gnnmodels::ModelFccl& model, const ContrastiveConfig& cconfig,
                                          const diffcore::TrainConfig& tconfig, Rng& rng);

}  // namespace ssnas::ssl
