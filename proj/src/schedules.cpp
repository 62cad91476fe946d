#include "sgts/schedules.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "sgts/errors.hpp"

namespace sgts {

void ScheduleConfig::validate() const {
  if (total_epochs < 1) throw ConfigError("epochs must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in (0, 1)");
  }
  if (!(alpha_start > alpha_end) || alpha_start > 1.0 || alpha_end < 0.0) {
    throw ConfigError("alpha schedule must satisfy 1 >= alpha_start > alpha_end >= 0");
  }
  if (!(tau_start > tau_end)) throw ConfigError("tau_start must exceed tau_end");
  if (!(lr_start > lr_end) || lr_end < 0.0) throw ConfigError("lr_start must exceed lr_end >= 0");
  if (!(ema_beta > 0.0 && ema_beta < 1.0)) throw ConfigError("ema_beta must lie in (0, 1)");
  const int w = warmup_epochs();
  if (w < 1) throw ConfigError("warm-up must span at least one epoch");
  // Co-training needs at least two epochs for the decay horizon to be >= 1.
  if (total_epochs - w - 1 < 1) {
    throw ConfigError("epochs=" + std::to_string(total_epochs) +
                      " leaves fewer than two co-training epochs after " + std::to_string(w) +
                      " warm-up epochs");
  }
}

int ScheduleConfig::warmup_epochs() const {
  return static_cast<int>(std::lround(total_epochs * warmup_fraction));
}

double cosine_decay(int t, int T, double v_start, double v_end) {
  if (T < 1) throw RangeError("cosine_decay: horizon must be >= 1");
  if (t < 0 || t > T) {
    throw RangeError("cosine_decay: t=" + std::to_string(t) + " outside [0, " + std::to_string(T) +
                     "]");
  }
  return v_end + 0.5 * (v_start - v_end) * (1.0 + std::cos(M_PI * t / T));
}

ScheduleState state_at(const ScheduleConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.total_epochs) {
    throw RangeError("state_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(config.total_epochs) + ")");
  }
  ScheduleState s;
  s.epoch = epoch;
  s.lr = config.total_epochs > 1
             ? cosine_decay(epoch, config.total_epochs - 1, config.lr_start, config.lr_end)
             : config.lr_start;
  const int warmup = config.warmup_epochs();
  if (epoch < warmup) {
    s.in_warmup = true;
    s.alpha = 1.0;
    s.tau = std::numeric_limits<double>::infinity();
    return s;
  }
  const int t = epoch - warmup;
  const int horizon = config.total_epochs - warmup - 1;
  if (horizon < 1) throw RangeError("state_at: co-training horizon shorter than two epochs");
  s.in_warmup = false;
  s.alpha = cosine_decay(t, horizon, config.alpha_start, config.alpha_end);
  s.tau = cosine_decay(t, horizon, config.tau_start, config.tau_end);
  return s;
}

}  // namespace sgts
