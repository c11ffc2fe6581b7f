#include "ssnas/diffcore/optim.hpp"

#include <cmath>
#include <numbers>

#include "ssnas/common/error.hpp"

namespace ssnas::diffcore {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("TrainConfig: learning_rate must be > 0");
  if (epochs < 1) throw Error("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
  if (weight_decay < 0.0) throw Error("TrainConfig: weight_decay must be >= 0");
}

void adam_step(ParameterStore& store, const AdamConfig& config) {
  const std::int64_t t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& [name, p] : store.params()) {
    if (p.grad.empty()) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (!config.decoupled) g += config.weight_decay * p.value[i];
      p.m[i] = config.beta1 * p.m[i] + (1.0 - config.beta1) * g;
      p.v[i] = config.beta2 * p.v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = p.m[i] / bc1;
      const double v_hat = p.v[i] / bc2;
      if (config.decoupled) p.value[i] -= config.learning_rate * config.weight_decay * p.value[i];
      p.value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
  store.set_step(t);
}

double cosine_lr(std::int64_t t, std::int64_t total, double lr0) {
  if (total <= 0) throw Error("cosine_lr: total steps must be > 0");
  if (t < 0 || t > total) throw Error("cosine_lr: step outside [0, total]");
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

double scheduled_lr(const TrainConfig& config, int epoch, std::int64_t step, std::int64_t total_steps) {
  if (config.schedule == Schedule::constant) return config.learning_rate;
  if (config.schedule_per_batch) return cosine_lr(step, total_steps, config.learning_rate);
  return cosine_lr(epoch, config.epochs, config.learning_rate);
}

}  // namespace ssnas::diffcore
