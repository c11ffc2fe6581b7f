#pragma once

#include <cstdint>

#include "ssnas/diffcore/params.hpp"

namespace ssnas::diffcore {

enum class Schedule { cosine, constant };

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-4;
  int epochs = 300;
  int batch_size = 64;
  Schedule schedule = Schedule::cosine;
  // Step the schedule once per epoch (default) or once per optimizer step.
  bool schedule_per_batch = false;
  // AdamW-style decay instead of an L2 term folded into the gradient.
  bool decoupled_weight_decay = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  bool decoupled = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every parameter in the store using its
// accumulated grad; increments the store's step counter.
void adam_step(ParameterStore& store, const AdamConfig& config);

// lr0 * 0.5 * (1 + cos(pi * t / T)); throws for T == 0 or t outside [0, T].
double cosine_lr(std::int64_t t, std::int64_t total, double lr0);

// Learning rate for (epoch, step) under config's schedule.
double scheduled_lr(const TrainConfig& config, int epoch, std::int64_t step, std::int64_t total_steps);

}  // namespace ssnas::diffcore
