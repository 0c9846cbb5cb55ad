#include "mobisec/detector.hpp"

#include <algorithm>
#include <cmath>

namespace mobisec {

StepResult<CusumState> cusum_step(const CusumState& state, double x, double mu0, double sigma0,
                                  const CusumParams& params) {
  StepResult<CusumState> out;
  const double s = std::max(0.0, state.s + (x - mu0) / sigma0 - params.k);
  out.score = s;
  out.alarm = s > params.h;
  out.state.s = out.alarm ? 0.0 : s;
  return out;
}

double poisson_llr(std::uint64_t n, double lambda0, double rho) {
  return static_cast<double>(n) * std::log(rho) - (rho - 1.0) * lambda0;
}

StepResult<BayesState> bayes_step(const BayesState& state, std::uint64_t n, double lambda0, const BayesParams& params) {
  if (!(lambda0 > 0.0)) throw ContractViolation("bayes_step: lambda0 must be > 0");
  if (!(params.rho > 1.0)) throw ContractViolation("bayes_step: rho must be > 1");
  StepResult<BayesState> out;
  const double llr = std::max(0.0, state.llr + poisson_llr(n, lambda0, params.rho));
  out.score = llr;
  out.alarm = llr > params.h_llr;
  out.state.llr = out.alarm ? 0.0 : llr;
  return out;
}

std::optional<AttackClass> window_class_to_attack(std::size_t index) {
  switch (index) {
    case 1: return AttackClass::SIGNALING_STORM;
    case 2: return AttackClass::PREMIUM_ABUSE;
    case 3: return AttackClass::SMS_SPAM;
    default: return std::nullopt;
  }
}

std::size_t attack_to_window_class(std::optional<AttackClass> c) {
  if (!c) return 0;
  switch (*c) {
    case AttackClass::SIGNALING_STORM: return 1;
    case AttackClass::PREMIUM_ABUSE: return 2;
    case AttackClass::SMS_SPAM: return 3;
    case AttackClass::BOTNET_DDOS: return 0;
  }
  return 0;
}

std::size_t argmax(const ClassPosterior& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

double fused_score(double cusum_score, double bayes_score, const FusionParams& fusion, const CusumParams& cusum,
                   const BayesParams& bayes) {
  return fusion.w_c * (cusum_score / cusum.h) + fusion.w_b * (bayes_score / bayes.h_llr);
}

std::optional<Alarm> fuse(double cusum_score, double bayes_score, const std::optional<ClassPosterior>& posterior,
                          const FusionParams& fusion, const CusumParams& cusum, const BayesParams& bayes,
                          const FuseContext& ctx) {
  if (fusion.w_c < 0.0 || fusion.w_b < 0.0) throw ValidationError("fuse: weights must be >= 0");
  const double fused = fused_score(cusum_score, bayes_score, fusion, cusum, bayes);
  if (!(fused > fusion.h_fused)) return std::nullopt;
  Alarm a;
  a.t_raised = ctx.t_raised;
  a.scope = AlarmScope::NETWORK;
  a.detector = DetectorKind::FUSED;
  a.score = fused;
  a.window_index = ctx.window_index;
  if (posterior) {
    // The type is the most likely attack class, not the overall argmax: a
    // window that fired the change detectors is typed only if some attack
    // class is itself confident.
    std::size_t best = 1;
    for (std::size_t i = 2; i < posterior->size(); ++i) {
      if ((*posterior)[i] > (*posterior)[best]) best = i;
    }
    if ((*posterior)[best] >= fusion.confidence_min) {
      a.attack_class = window_class_to_attack(best);
      a.confidence = (*posterior)[best];
    }
  }
  return a;
}

UserScore user_score(const std::optional<UserBaseline>& history, const UserWindow& window,
                     const UserScoreParams& params) {
  UserScore out;
  if (!history) {
    out.updated = UserBaseline{window.premium_charge_units, 0.0, window.sms_out_count, 0.0};
    return out;
  }
  const auto& h = *history;
  const double z_charge = (window.premium_charge_units - h.charge_mean) / std::max(h.charge_dev, params.dev_floor);
  const double z_sms = (window.sms_out_count - h.sms_mean) / std::max(h.sms_dev, params.dev_floor);
  out.z = std::max(z_charge, z_sms);
  out.alarm = out.z > params.z_h;

  const double a = params.decay;
  out.updated.charge_mean = a * h.charge_mean + (1.0 - a) * window.premium_charge_units;
  out.updated.charge_dev = a * h.charge_dev + (1.0 - a) * std::abs(window.premium_charge_units - h.charge_mean);
  out.updated.sms_mean = a * h.sms_mean + (1.0 - a) * window.sms_out_count;
  out.updated.sms_dev = a * h.sms_dev + (1.0 - a) * std::abs(window.sms_out_count - h.sms_mean);
  return out;
}

void to_json(json& j, const CusumParams& p) { j = json{{"k", p.k}, {"h", p.h}}; }
void from_json(const json& j, CusumParams& p) {
  p.k = j.value("k", p.k);
  p.h = j.value("h", p.h);
  if (!(p.k >= 0.0) || !(p.h > 0.0)) throw ValidationError("cusum: need k >= 0 and h > 0");
}

void to_json(json& j, const BayesParams& p) { j = json{{"rho", p.rho}, {"h_llr", p.h_llr}}; }
void from_json(const json& j, BayesParams& p) {
  p.rho = j.value("rho", p.rho);
  p.h_llr = j.value("h_llr", p.h_llr);
  if (!(p.rho > 1.0) || !(p.h_llr > 0.0)) throw ValidationError("bayes: need rho > 1 and h_llr > 0");
}

void to_json(json& j, const FusionParams& p) {
  j = json{{"w_c", p.w_c}, {"w_b", p.w_b}, {"h_fused", p.h_fused}, {"confidence_min", p.confidence_min}};
}
void from_json(const json& j, FusionParams& p) {
  p.w_c = j.value("w_c", p.w_c);
  p.w_b = j.value("w_b", p.w_b);
  p.h_fused = j.value("h_fused", p.h_fused);
  p.confidence_min = j.value("confidence_min", p.confidence_min);
  if (p.w_c < 0.0 || p.w_b < 0.0) throw ValidationError("fusion: weights must be >= 0");
  if (!(p.confidence_min >= 0.0 && p.confidence_min <= 1.0)) throw ValidationError("fusion: confidence_min in [0,1]");
}

void to_json(json& j, const UserScoreParams& p) {
  j = json{{"z_h", p.z_h}, {"decay", p.decay}, {"dev_floor", p.dev_floor}};
}
void from_json(const json& j, UserScoreParams& p) {
  p.z_h = j.value("z_h", p.z_h);
  p.decay = j.value("decay", p.decay);
  p.dev_floor = j.value("dev_floor", p.dev_floor);
  if (!(p.decay > 0.0 && p.decay < 1.0) || !(p.dev_floor > 0.0)) {
    throw ValidationError("user score: need 0 < decay < 1 and dev_floor > 0");
  }
}

void to_json(json& j, const UserBaseline& b) {
  j = json{{"charge_mean", b.charge_mean}, {"charge_dev", b.charge_dev}, {"sms_mean", b.sms_mean}, {"sms_dev", b.sms_dev}};
}
void from_json(const json& j, UserBaseline& b) {
  b.charge_mean = j.at("charge_mean").get<double>();
  b.charge_dev = j.at("charge_dev").get<double>();
  b.sms_mean = j.at("sms_mean").get<double>();
  b.sms_dev = j.at("sms_dev").get<double>();
}

}  // namespace mobisec
