#pragma once

#include <array>
#include <optional>

#include "mobisec/types.hpp"

namespace mobisec {

struct CusumParams {
  double k = 0.5;  // drift allowance, in standard deviations
  double h = 8.0;  // decision threshold
  bool operator==(const CusumParams&) const = default;
};

struct BayesParams {
  double rho = 1.5;     // rate multiplier under the attack hypothesis
  double h_llr = 10.0;  // threshold on the cumulative log-likelihood ratio
  bool operator==(const BayesParams&) const = default;
};

struct FusionParams {
  double w_c = 0.5;
  double w_b = 0.5;
  double h_fused = 1.0;
  double confidence_min = 0.8;
  bool operator==(const FusionParams&) const = default;
};

struct UserScoreParams {
  double z_h = 6.0;
  double decay = 0.95;
  double dev_floor = 1.0;  // charge units (1000 milli-units) or messages per window
  bool operator==(const UserScoreParams&) const = default;
};

struct CusumState {
  double s = 0.0;
  bool operator==(const CusumState&) const = default;
};

struct BayesState {
  double llr = 0.0;
  bool operator==(const BayesState&) const = default;
};

template <typename State>
struct StepResult {
  State state;
  double score = 0.0;  // statistic before any reset
  bool alarm = false;
};

// S <- max(0, S + (x - mu0)/sigma0 - k); alarm iff S > h, then S resets to 0.
StepResult<CusumState> cusum_step(const CusumState& state, double x, double mu0, double sigma0,
                                  const CusumParams& params);

// Per-window Poisson log-likelihood ratio of rate rho*lambda0 against lambda0.
double poisson_llr(std::uint64_t n, double lambda0, double rho);

// L <- max(0, L + poisson_llr(n)); alarm iff L > h_llr, then L resets to 0.
// Throws ContractViolation unless lambda0 > 0 and rho > 1.
StepResult<BayesState> bayes_step(const BayesState& state, std::uint64_t n, double lambda0, const BayesParams& params);

inline constexpr std::size_t kNumWindowClasses = 4;

// Posterior over {NORMAL, SIGNALING_STORM, PREMIUM_ABUSE, SMS_SPAM}.
using ClassPosterior = std::array<double, kNumWindowClasses>;

// Maps posterior index 1..3 to the attack class; index 0 is NORMAL.
std::optional<AttackClass> window_class_to_attack(std::size_t index);
std::size_t attack_to_window_class(std::optional<AttackClass> c);

// First index of the maximum; ties resolve toward NORMAL then enumeration order.
std::size_t argmax(const ClassPosterior& p);

struct FuseContext {
  SimTime t_raised = 0;
  std::uint64_t window_index = 0;
};

double fused_score(double cusum_score, double bayes_score, const FusionParams& fusion, const CusumParams& cusum,
                   const BayesParams& bayes);

// FUSED alarm iff fused_score > h_fused. The alarm names an attack class only
// when the posterior's top attack class reaches confidence_min. Throws
// ValidationError on negative weights.
std::optional<Alarm> fuse(double cusum_score, double bayes_score, const std::optional<ClassPosterior>& posterior,
                          const FusionParams& fusion, const CusumParams& cusum, const BayesParams& bayes,
                          const FuseContext& ctx);

// Per-user exponentially weighted baselines over LONG windows.
struct UserBaseline {
  double charge_mean = 0.0;
  double charge_dev = 0.0;
  double sms_mean = 0.0;
  double sms_dev = 0.0;
  bool operator==(const UserBaseline&) const = default;
};

// One pseudonym's billing activity in one LONG window.
struct UserWindow {
  double premium_charge_units = 0.0;
  double sms_out_count = 0.0;
};

struct UserScore {
  double z = 0.0;
  bool alarm = false;
  UserBaseline updated;
};

// Scores a window against the history, then folds the window into it. A user
// with no history gets no alarm and a baseline seeded from this window.
UserScore user_score(const std::optional<UserBaseline>& history, const UserWindow& window,
                     const UserScoreParams& params);

void to_json(json& j, const CusumParams& p);
void from_json(const json& j, CusumParams& p);
void to_json(json& j, const BayesParams& p);
void from_json(const json& j, BayesParams& p);
void to_json(json& j, const FusionParams& p);
void from_json(const json& j, FusionParams& p);
void to_json(json& j, const UserScoreParams& p);
void from_json(const json& j, UserScoreParams& p);
void to_json(json& j, const UserBaseline& b);
void from_json(const json& j, UserBaseline& b);

}  // namespace mobisec
