#pragma once

#include <deque>
#include <vector>

#include "mobisec/rng.hpp"
#include "mobisec/types.hpp"

namespace mobisec {

struct QueueStats {
  std::uint64_t arrivals = 0;
  std::uint64_t served = 0;
  double area = 0.0;  // integral of backlog over time, message-milliseconds
  std::uint64_t max_backlog = 0;
};

// Single-server FIFO station with exponential service: the signaling server
// that every control-plane message passes through. Completion times are
// fixed at offer time (Lindley recursion) and retired lazily as the clock
// advances, so the engine needs no per-message events.
class SignalingQueue {
 public:
  explicit SignalingQueue(double service_rate_per_s);

  // Enqueue n messages arriving at t. Returns their completion times in ms,
  // strictly increasing. Throws ContractViolation if n == 0 or t is earlier
  // than the queue clock.
  std::vector<double> offer(SimTime t, std::uint64_t n, Rng& rng);

  // Retire completions up to and including t, accumulating the backlog area.
  void advance(double t);

  std::uint64_t backlog() const { return pending_.size(); }
  bool busy() const { return !pending_.empty(); }
  double clock() const { return clock_; }
  double service_rate_per_s() const { return service_rate_per_s_; }
  const QueueStats& stats() const { return stats_; }

  // Time-averaged number in system over [0, clock()].
  double mean_in_system() const;

 private:
  double service_rate_per_s_;
  double clock_ = 0.0;
  double last_completion_ = 0.0;
  std::deque<double> pending_;
  QueueStats stats_;
};

struct Mm1Metrics {
  double utilization = 0.0;
  double mean_in_system = 0.0;
  double mean_wait_s = 0.0;
};

// Stationary M/M/1 results. Throws ValidationError unless 0 <= lambda < mu.
Mm1Metrics mm1_metrics(double lambda_per_s, double mu_per_s);

}  // namespace mobisec
