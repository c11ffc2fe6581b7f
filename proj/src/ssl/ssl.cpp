#include "ssnas/ssl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "ssnas/common/error.hpp"

namespace ssnas::ssl {

using archspace::Architecture;
using diffcore::Mode;
using diffcore::Tape;

void ContrastiveConfig::validate() const {
  if (draws == 0 || draws > batch_size) throw Error("ContrastiveConfig: need 0 < M <= N");
  if (!(temperature > 0.0)) throw Error("ContrastiveConfig: temperature must be > 0");
  if (lambda < 0.0) throw Error("ContrastiveConfig: lambda must be >= 0");
}

ContrastiveBatchPlan plan_contrastive_batch(std::span<const encoding::PositionAwareEncoding* const> batch,
                                            std::size_t draws, Rng& rng) {
  const std::size_t n = batch.size();
  if (n < 2) throw Error("plan_contrastive_batch: batch needs at least 2 architectures");
  if (draws == 0 || draws > n) throw Error("plan_contrastive_batch: draws must be in [1, batch size]");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `draws` entries are the anchors.
  for (std::size_t t = 0; t < draws; ++t) std::swap(order[t], order[t + uniform_index(rng, n - t)]);

  ContrastiveBatchPlan plan;
  plan.batch_size = n;
  plan.draws.reserve(draws);
  for (std::size_t t = 0; t < draws; ++t) {
    ContrastiveDraw d;
    d.anchor = order[t];
    d.geds.resize(n);
    d.min_ged = std::numeric_limits<std::size_t>::max();
    for (std::size_t j = 0; j < n; ++j) {
      d.geds[j] = j == d.anchor ? 0 : encoding::padded_l1(batch[d.anchor]->concat, batch[j]->concat);
      if (j != d.anchor) d.min_ged = std::min(d.min_ged, d.geds[j]);
    }
    if (d.min_ged == 0)
      throw Error("plan_contrastive_batch: batch contains duplicate encodings; dedupe the dataset first");
    d.positives.push_back(d.anchor);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == d.anchor) continue;
      (d.geds[j] == d.min_ged ? d.positives : d.negatives).push_back(j);
    }
    plan.draws.push_back(std::move(d));
  }
  return plan;
}

ContrastiveBatchPlan plan_contrastive_batch(std::span<const Architecture> batch, std::size_t draws, Rng& rng) {
  std::vector<encoding::PositionAwareEncoding> encs;
  encs.reserve(batch.size());
  for (const Architecture& a : batch) {
    if (a.space() != batch.front().space() && !(*a.space() == *batch.front().space()))
      throw Error("plan_contrastive_batch: architectures come from different spaces");
    encs.push_back(encoding::encode_position_aware(a));
  }
  std::vector<const encoding::PositionAwareEncoding*> ptrs;
  for (const auto& e : encs) ptrs.push_back(&e);
  return plan_contrastive_batch(std::span<const encoding::PositionAwareEncoding* const>(ptrs), draws, rng);
}

ContrastiveLoss central_contrastive_loss(Var embeddings, const ContrastiveBatchPlan& plan, double temperature) {
  if (!(temperature > 0.0)) throw Error("central_contrastive_loss: temperature must be > 0");
  if (plan.draws.empty()) throw Error("central_contrastive_loss: empty plan");
  const Matrix& ev = embeddings.value();
  if (ev.rows() != plan.batch_size) throw Error("central_contrastive_loss: embedding rows != batch size");
  for (std::size_t r = 0; r < ev.rows(); ++r) {
    double s = 0.0;
    for (double v : ev.row(r)) s += v * v;
    if (std::sqrt(s) < 1e-12) throw Error("central_contrastive_loss: zero-norm embedding");
  }

  Var z = diffcore::l2_normalize_rows(embeddings);
  std::vector<Var> terms;
  std::vector<Var> centers;
  terms.reserve(plan.draws.size());
  centers.reserve(plan.draws.size());
  const double inv_tau = 1.0 / temperature;
  for (const ContrastiveDraw& d : plan.draws) {
    Var center = diffcore::l2_normalize_rows(diffcore::mean_rows(diffcore::gather_rows(z, d.positives)));
    centers.push_back(center);
    // Cosine similarity of every batch member to the center, over tau.
    Var sims = diffcore::scale(diffcore::matmul(z, diffcore::transpose(center)), inv_tau);
    Var sp = diffcore::gather_rows(sims, d.positives);
    Var logits = sp;
    if (!d.negatives.empty()) {
      Var sn = diffcore::transpose(diffcore::gather_rows(sims, d.negatives));
      logits = diffcore::concat_cols(sp, diffcore::broadcast_rows(sn, d.positives.size()));
    }
    terms.push_back(diffcore::sum(diffcore::sub(diffcore::logsumexp_rows(logits), sp)));
  }
  Var total = diffcore::sum(diffcore::concat_rows(terms));
  return {diffcore::scale(total, 1.0 / static_cast<double>(plan.draws.size())), diffcore::concat_rows(centers)};
}

Var center_regularization(Var centers, bool squared) {
  Var gram = diffcore::matmul(centers, diffcore::transpose(centers));
  return diffcore::scale(diffcore::offdiag_sum(gram, squared), 0.5);
}

double center_regularization(const Matrix& centers, bool squared) {
  Tape tape;
  return center_regularization(tape.constant(centers), squared).scalar();
}

namespace {

void step_optimizer(diffcore::ParameterStore& store, const diffcore::TrainConfig& config, double lr) {
  diffcore::AdamConfig adam;
  adam.learning_rate = lr;
  adam.weight_decay = config.weight_decay;
  adam.decoupled = config.decoupled_weight_decay;
  diffcore::adam_step(store, adam);
}

std::vector<encoding::PositionAwareEncoding> encode_all(std::span<const Architecture> archs) {
  std::vector<encoding::PositionAwareEncoding> encs;
  encs.reserve(archs.size());
  for (const Architecture& a : archs) encs.push_back(encoding::encode_position_aware(a));
  return encs;
}

}  // namespace

TrainHistory pretrain_regression(std::span<const Architecture> archs, gnnmodels::ModelFrl& model,
                                 const diffcore::TrainConfig& config, Rng& rng) {
  if (archs.size() < 2) throw Error("pretrain_regression: need at least 2 architectures");
  config.validate();
  const auto encs = encode_all(archs);
  const std::size_t n = archs.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * config.epochs;

  TrainHistory history;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      std::vector<const Architecture*> left;
      std::vector<const Architecture*> right;
      Matrix target(count, 1);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = uniform_index(rng, n);
        const std::size_t j = uniform_index(rng, n);
        left.push_back(&archs[i]);
        right.push_back(&archs[j]);
        target[k] = encoding::nged(encoding::padded_l1(encs[i].concat, encs[j].concat),
                                   std::max(archs[i].node_count(), archs[j].node_count()));
      }
      const bool bidir = model.embedding.bidirectional;
      const auto lb = gnnmodels::to_graph_batch(std::span<const Architecture* const>(left), bidir);
      const auto rb = gnnmodels::to_graph_batch(std::span<const Architecture* const>(right), bidir);
      const double lr = diffcore::scheduled_lr(config, epoch, step, total_steps);
      model.store.zero_grad();
      Tape tape;
      Var loss = diffcore::mse(gnnmodels::frl_forward(tape, model, lb, rb, Mode::train), target);
      tape.backward(loss);
      step_optimizer(model.store, config, lr);
      loss_sum += loss.scalar() * static_cast<double>(count);
      seen += count;
      ++step;
    }
    history.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  return history;
}

TrainHistory pretrain_central_contrastive(std::span<const Architecture> archs, gnnmodels::ModelFccl& model,
                                          const ContrastiveConfig& cconfig, const diffcore::TrainConfig& tconfig,
                                          Rng& rng) {
  cconfig.validate();
  tconfig.validate();
  const std::size_t n = archs.size();
  const std::size_t bs = cconfig.batch_size;
  if (n < bs && cconfig.drop_last) throw Error("pretrain_central_contrastive: dataset smaller than one batch");
  if (n < 2) throw Error("pretrain_central_contrastive: need at least 2 architectures");
  const auto encs = encode_all(archs);
  {
    std::unordered_set<std::string> keys;
    for (const auto& e : encs)
      if (!keys.insert(encoding::encoding_key(e)).second)
        throw Error("pretrain_central_contrastive: duplicate encodings in dataset; dedupe first");
  }
  const std::size_t batches = cconfig.drop_last ? n / bs : (n + bs - 1) / bs;
  const std::int64_t total_steps = static_cast<std::int64_t>(batches) * tconfig.epochs;

  TrainHistory history;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < tconfig.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t start = b * bs;
      const std::size_t count = std::min(bs, n - start);
      if (count < 2) continue;
      std::vector<const Architecture*> members;
      std::vector<const encoding::PositionAwareEncoding*> member_encs;
      for (std::size_t k = 0; k < count; ++k) {
        members.push_back(&archs[order[start + k]]);
        member_encs.push_back(&encs[order[start + k]]);
      }
      const auto plan = plan_contrastive_batch(std::span<const encoding::PositionAwareEncoding* const>(member_encs),
                                               std::min(cconfig.draws, count), rng);
      const auto graphs =
          gnnmodels::to_graph_batch(std::span<const Architecture* const>(members), model.embedding.bidirectional);
      const double lr = diffcore::scheduled_lr(tconfig, epoch, step, total_steps);
      model.store.zero_grad();
      Tape tape;
      Var proj = gnnmodels::fccl_forward(tape, model, graphs, Mode::train);
      ContrastiveLoss parts = central_contrastive_loss(proj, plan, cconfig.temperature);
      Var loss = parts.loss;
      if (cconfig.lambda > 0.0)
        loss = diffcore::add(loss,
                             diffcore::scale(center_regularization(parts.centers, cconfig.squared_reg), cconfig.lambda));
      tape.backward(loss);
      step_optimizer(model.store, tconfig, lr);
      loss_sum += loss.scalar();
      ++step;
    }
    history.epoch_loss.push_back(batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches));
  }
  return history;
}

}  // namespace ssnas::ssl
