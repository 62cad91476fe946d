#pragma once

// Epoch-indexed curricula for the two-phase protocol.

namespace sgts {

struct ScheduleConfig {
  int total_epochs = 60;
  double warmup_fraction = 0.25;
  double alpha_start = 0.9;
  double alpha_end = 0.01;
  double tau_start = 0.95;
  double tau_end = 0.25;
  double lr_start = 0.01;
  double lr_end = 0.00001;
  double ema_beta = 0.999;

  // Throws ConfigError when any bound or the warm-up split is invalid.
  void validate() const;
  // round(total_epochs * warmup_fraction)
  int warmup_epochs() const;
};

struct ScheduleState {
  int epoch = 0;
  double alpha = 1.0;
  double tau = 0.0;  // +inf during warm-up: no teacher pixel can pass
  double lr = 0.0;
  bool in_warmup = true;
};

// v_end + (v_start - v_end) * (1 + cos(pi * t / T)) / 2, for 0 <= t <= T.
double cosine_decay(int t, int T, double v_start, double v_end);

// Warm-up epochs: alpha = 1, tau = +inf. Afterwards alpha and tau decay over
// the post-warm-up epochs only, so the first co-training epoch sees
// (alpha_start, tau_start) and the last sees (alpha_end, tau_end). The
// learning rate decays over the whole horizon.
ScheduleState state_at(const ScheduleConfig& config, int epoch);

}  // namespace sgts
