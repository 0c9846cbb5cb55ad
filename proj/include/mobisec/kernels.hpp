#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an OpenMP
// version that must produce bitwise-identical results; the dispatching entry
// point picks the OpenMP one unless parallelism is switched off.

#include <optional>
#include <span>
#include <vector>

#include "mobisec/detector.hpp"
#include "mobisec/workload.hpp"

namespace mobisec {

struct ClassifierModel;

namespace kernels {

void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

// Every session each user starts in [0, horizon), one independent substream
// per user (StreamTag::kUserSessions, index = position in `profiles`).
using SessionTable = std::vector<std::vector<SessionPlan>>;

SessionTable generate_sessions_serial(std::span<const UeProfile> profiles, std::uint64_t master_seed, SimTime horizon,
                                      const DiurnalCurve& curve);
SessionTable generate_sessions_omp(std::span<const UeProfile> profiles, std::uint64_t master_seed, SimTime horizon,
                                   const DiurnalCurve& curve);
SessionTable generate_sessions(std::span<const UeProfile> profiles, std::uint64_t master_seed, SimTime horizon,
                               const DiurnalCurve& curve);

struct UserEntry {
  Pseudonym user;
  std::optional<UserBaseline> history;
  UserWindow window;
};

std::vector<UserScore> score_users_serial(std::span<const UserEntry> entries, const UserScoreParams& params);
std::vector<UserScore> score_users_omp(std::span<const UserEntry> entries, const UserScoreParams& params);
std::vector<UserScore> score_users(std::span<const UserEntry> entries, const UserScoreParams& params);

struct GradientResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Mean cross-entropy and gradient over the selected rows of xs. Per-row
// gradients are computed independently and summed in row order, so the OpenMP
// version matches the serial one bit for bit.
GradientResult batch_gradient_serial(const ClassifierModel& m, std::span<const double> xs,
                                     std::span<const std::size_t> labels, std::span<const std::size_t> rows);
GradientResult batch_gradient_omp(const ClassifierModel& m, std::span<const double> xs,
                                  std::span<const std::size_t> labels, std::span<const std::size_t> rows);
GradientResult batch_gradient(const ClassifierModel& m, std::span<const double> xs,
                              std::span<const std::size_t> labels, std::span<const std::size_t> rows);

}  // namespace kernels
}  // namespace mobisec
