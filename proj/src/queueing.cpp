#include "mobisec/queueing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mobisec {

SignalingQueue::SignalingQueue(double service_rate_per_s) : service_rate_per_s_(service_rate_per_s) {
  if (!(service_rate_per_s > 0.0) || !std::isfinite(service_rate_per_s)) {
    throw ValidationError("queue: service rate must be > 0");
  }
}

std::vector<double> SignalingQueue::offer(SimTime t, std::uint64_t n, Rng& rng) {
  if (n == 0) throw ContractViolation("queue: offer needs at least one message");
  const double now = static_cast<double>(t);
  if (now < clock_) throw ContractViolation("queue: offer at t=" + std::to_string(t) + " precedes queue clock");
  advance(now);

  const double rate_per_ms = service_rate_per_s_ / 1000.0;
  std::vector<double> done;
  done.reserve(n);
  double begin = std::max(now, last_completion_);
  for (std::uint64_t i = 0; i < n; ++i) {
    double finish = begin + rng.exponential(rate_per_ms);
    // A zero draw must still leave completions strictly increasing.
    if (finish <= begin) finish = std::nextafter(begin, INFINITY);
    done.push_back(finish);
    pending_.push_back(finish);
    begin = finish;
  }
  last_completion_ = begin;
  stats_.arrivals += n;
  stats_.max_backlog = std::max<std::uint64_t>(stats_.max_backlog, pending_.size());
  return done;
}

void SignalingQueue::advance(double t) {
  if (t <= clock_) return;
  while (!pending_.empty() && pending_.front() <= t) {
    const double c = pending_.front();
    stats_.area += static_cast<double>(pending_.size()) * (c - clock_);
    clock_ = c;
    pending_.pop_front();
    ++stats_.served;
  }
  stats_.area += static_cast<double>(pending_.size()) * (t - clock_);
  clock_ = t;
}

double SignalingQueue::mean_in_system() const { return clock_ > 0.0 ? stats_.area / clock_ : 0.0; }

Mm1Metrics mm1_metrics(double lambda_per_s, double mu_per_s) {
  if (!(mu_per_s > 0.0) || !(lambda_per_s >= 0.0)) throw ValidationError("mm1: rates must satisfy lambda >= 0, mu > 0");
  if (lambda_per_s >= mu_per_s) throw ValidationError("mm1: lambda >= mu has no stationary regime");
  const double rho = lambda_per_s / mu_per_s;
  return {rho, rho / (1.0 - rho), 1.0 / (mu_per_s - lambda_per_s)};
}

}  // namespace mobisec
