#include "mobisec/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mobisec/classifier.hpp"
#include "mobisec/rng.hpp"

namespace mobisec::kernels {

namespace {

std::atomic<bool> g_parallel{true};

std::vector<SessionPlan> sessions_for(const UeProfile& profile, std::uint64_t master_seed, std::size_t index,
                                      SimTime horizon, const DiurnalCurve& curve) {
  Rng rng(master_seed, StreamTag::kUserSessions, index);
  std::vector<SessionPlan> out;
  SimTime after = 0;
  for (;;) {
    auto plan = next_session(profile, rng, after, curve);
    if (plan.t >= horizon) break;
    after = plan.t;
    out.push_back(plan);
  }
  return out;
}

// Gradient of -log softmax(z)[label] for one standardized row, written into g
// (which must be zeroed, sized parameter_count()). Returns the row loss.
double row_gradient(const ClassifierModel& m, const double* x, std::size_t label, double* g) {
  const std::size_t F = m.input_dim;
  const std::size_t H = m.hidden;
  constexpr std::size_t C = kNumWindowClasses;
  std::vector<double> h(H);
  for (std::size_t j = 0; j < H; ++j) {
    double a = m.b1[j];
    for (std::size_t i = 0; i < F; ++i) a += m.w1[j * F + i] * x[i];
    h[j] = std::tanh(a);
  }
  std::array<double, C> z{};
  double zmax = -INFINITY;
  for (std::size_t c = 0; c < C; ++c) {
    double a = m.b2[c];
    for (std::size_t j = 0; j < H; ++j) a += m.w2[c * H + j] * h[j];
    z[c] = a;
    zmax = std::max(zmax, a);
  }
  double sum = 0.0;
  std::array<double, C> p{};
  for (std::size_t c = 0; c < C; ++c) {
    p[c] = std::exp(z[c] - zmax);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  const double loss = -(z[label] - zmax - std::log(sum));

  double* gw1 = g;
  double* gb1 = gw1 + H * F;
  double* gw2 = gb1 + H;
  double* gb2 = gw2 + C * H;
  std::vector<double> dh(H, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double dz = p[c] - (c == label ? 1.0 : 0.0);
    gb2[c] = dz;
    for (std::size_t j = 0; j < H; ++j) {
      gw2[c * H + j] = dz * h[j];
      dh[j] += m.w2[c * H + j] * dz;
    }
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double da = dh[j] * (1.0 - h[j] * h[j]);
    gb1[j] = da;
    for (std::size_t i = 0; i < F; ++i) gw1[j * F + i] = da * x[i];
  }
  return loss;
}

GradientResult reduce_rows(const std::vector<double>& per_row, const std::vector<double>& losses, std::size_t P) {
  GradientResult r;
  r.gradient.assign(P, 0.0);
  const std::size_t n = losses.size();
  for (std::size_t k = 0; k < n; ++k) {
    r.loss += losses[k];
    const double* g = per_row.data() + k * P;
    for (std::size_t i = 0; i < P; ++i) r.gradient[i] += g[i];
  }
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    r.loss *= inv;
    for (auto& v : r.gradient) v *= inv;
  }
  return r;
}

}  // namespace

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

SessionTable generate_sessions_serial(std::span<const UeProfile> profiles, std::uint64_t master_seed, SimTime horizon,
                                      const DiurnalCurve& curve) {
  curve.validate();
  SessionTable table(profiles.size());
  for (std::size_t u = 0; u < profiles.size(); ++u) table[u] = sessions_for(profiles[u], master_seed, u, horizon, curve);
  return table;
}

SessionTable generate_sessions_omp(std::span<const UeProfile> profiles, std::uint64_t master_seed, SimTime horizon,
                                   const DiurnalCurve& curve) {
  curve.validate();
  SessionTable table(profiles.size());
  const auto n = static_cast<std::ptrdiff_t>(profiles.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t u = 0; u < n; ++u) {
    const auto i = static_cast<std::size_t>(u);
    table[i] = sessions_for(profiles[i], master_seed, i, horizon, curve);
  }
  return table;
}

SessionTable generate_sessions(std::span<const UeProfile> profiles, std::uint64_t master_seed, SimTime horizon,
                               const DiurnalCurve& curve) {
  return parallel_enabled() ? generate_sessions_omp(profiles, master_seed, horizon, curve)
                            : generate_sessions_serial(profiles, master_seed, horizon, curve);
}

std::vector<UserScore> score_users_serial(std::span<const UserEntry> entries, const UserScoreParams& params) {
  std::vector<UserScore> out(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out[i] = user_score(entries[i].history, entries[i].window, params);
  return out;
}

std::vector<UserScore> score_users_omp(std::span<const UserEntry> entries, const UserScoreParams& params) {
  std::vector<UserScore> out(entries.size());
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = user_score(entries[k].history, entries[k].window, params);
  }
  return out;
}

std::vector<UserScore> score_users(std::span<const UserEntry> entries, const UserScoreParams& params) {
  return parallel_enabled() ? score_users_omp(entries, params) : score_users_serial(entries, params);
}

GradientResult batch_gradient_serial(const ClassifierModel& m, std::span<const double> xs,
                                     std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  const std::size_t P = m.parameter_count();
  std::vector<double> per_row(rows.size() * P, 0.0);
  std::vector<double> losses(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    losses[k] = row_gradient(m, xs.data() + r * m.input_dim, labels[r], per_row.data() + k * P);
  }
  return reduce_rows(per_row, losses, P);
}

GradientResult batch_gradient_omp(const ClassifierModel& m, std::span<const double> xs,
                                  std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  const std::size_t P = m.parameter_count();
  std::vector<double> per_row(rows.size() * P, 0.0);
  std::vector<double> losses(rows.size());
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const std::size_t r = rows[k];
    losses[k] = row_gradient(m, xs.data() + r * m.input_dim, labels[r], per_row.data() + k * P);
  }
  return reduce_rows(per_row, losses, P);
}

GradientResult batch_gradient(const ClassifierModel& m, std::span<const double> xs,
                              std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  return parallel_enabled() ? batch_gradient_omp(m, xs, labels, rows) : batch_gradient_serial(m, xs, labels, rows);
}

}  // namespace mobisec::kernels
