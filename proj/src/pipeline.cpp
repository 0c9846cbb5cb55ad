#include "mobisec/pipeline.hpp"

#include "mobisec/kernels.hpp"

namespace mobisec {

void to_json(json& j, const Marker& m) {
  j = json{{"marker", m.kind}, {"window_index", m.window_index}, {"t", m.t}, {"payload", m.payload}};
}

void from_json(const json& j, Marker& m) {
  m.kind = j.at("marker").get<std::string>();
  if (m.kind != "tune" && m.kind != "inject") throw ValidationError("unknown marker kind '" + m.kind + "'");
  m.window_index = j.at("window_index").get<std::uint64_t>();
  m.t = j.at("t").get<SimTime>();
  m.payload = j.at("payload");
}

json record_to_json(const StreamRecord& r) {
  return std::visit([](const auto& x) { return json(x); }, r);
}

StreamRecord record_from_json(const json& j) {
  if (j.contains("marker")) return j.get<Marker>();
  return j.get<Alarm>();
}

DetectorPipeline::DetectorPipeline(DetectorConfig cfg, WindowConfig windows, SimTime horizon,
                                   std::optional<BaselineModel> baseline,
                                   std::shared_ptr<const ClassifierModel> model)
    : cfg_(std::move(cfg)),
      windows_(windows),
      horizon_(horizon),
      baseline_(std::move(baseline)),
      model_(std::move(model)),
      short_{Scale::SHORT, windows.short_ms, 0, {}, {}},
      long_{Scale::LONG, windows.long_ms, 0, {}, {}} {
  cfg_.validate();
  windows_.validate();
  if (baseline_) {
    const auto& sb = baseline_->scale(cfg_.detection_scale);
    if (sb.width_ms != windows_.width(cfg_.detection_scale)) {
      throw ValidationError("baseline was calibrated for a different window width");
    }
    users_ = baseline_->users;
  }
}

void DetectorPipeline::push_event(const SignalingEvent& e) {
  if (e.t < clock_) throw StreamError("signaling event out of order at t=" + std::to_string(e.t));
  clock_ = e.t;
  if (e.t >= horizon_) return;
  advance_to(e.t);
  short_.events.push_back(e);
  long_.events.push_back(e);
}

void DetectorPipeline::push_cdr(const Cdr& c) {
  const SimTime t = cdr_time(c);
  if (t < clock_) throw StreamError("CDR out of order at t=" + std::to_string(t));
  if (!std::holds_alternative<Pseudonym>(c.ue) || !std::holds_alternative<Pseudonym>(c.peer)) {
    throw StreamError("detector accepts sanitized CDRs only");
  }
  clock_ = t;
  if (t >= horizon_) return;
  advance_to(t);
  short_.cdrs.push_back(c);
  long_.cdrs.push_back(c);
}

void DetectorPipeline::advance_to(SimTime t) {
  const SimTime limit = std::min(t, horizon_);
  clock_ = std::max(clock_, std::min(t, horizon_));
  for (;;) {
    const SimTime short_end = (short_.next_index + 1) * short_.width;
    const SimTime long_end = (long_.next_index + 1) * long_.width;
    // At equal ends the SHORT window closes first.
    if (short_end <= limit && short_end <= long_end) {
      close_window(short_);
    } else if (long_end <= limit) {
      close_window(long_);
    } else {
      break;
    }
  }
}

void DetectorPipeline::finish() { advance_to(horizon_); }

void DetectorPipeline::truncate(SimTime horizon) {
  if (horizon < clock_) throw ContractViolation("cannot truncate before the pipeline clock");
  horizon_ = std::min(horizon_, horizon);
}

std::uint64_t DetectorPipeline::open_window() const {
  return cfg_.detection_scale == Scale::SHORT ? short_.next_index : long_.next_index;
}

Marker DetectorPipeline::schedule_tune(const json& patch) {
  apply_detector_patch(cfg_, patch);
  const auto idx = open_window() + 1;
  Marker m{"tune", idx, idx * detection_width(), patch};
  schedule(m);
  return m;
}

Marker DetectorPipeline::schedule_inject(const json& spec) {
  const auto idx = open_window() + 1;
  Marker m{"inject", idx, idx * detection_width(), spec};
  schedule(m);
  return m;
}

void DetectorPipeline::schedule(const Marker& m) {
  if (m.window_index <= open_window()) {
    throw ContractViolation("marker for window " + std::to_string(m.window_index) + " would change a window already open");
  }
  if (m.t != m.window_index * detection_width()) throw ValidationError("marker time does not match its window");
  pending_[m.window_index].push_back(m);
}

void DetectorPipeline::emit(StreamRecord r) {
  records_.push_back(r);
  ++emitted_in_window_;
  if (record_sink_) record_sink_(records_.back());
}

void DetectorPipeline::close_window(ScaleBuffer& buf) {
  const WindowSpec spec{buf.next_index, buf.scale, buf.next_index * buf.width, buf.width};
  const auto f = extract_features(buf.events, buf.cdrs, spec);
  emitted_in_window_ = 0;
  const bool ready = baseline_.has_value();
  const SimTime prefix_end = static_cast<SimTime>(cfg_.prefix_windows) * windows_.long_ms;

  if (buf.scale == Scale::LONG) long_features_.push_back(f);
  if (!ready && spec.end() <= prefix_end) prefix_.push_back(f);
  if (ready && buf.scale == cfg_.detection_scale) detect(f);
  if (buf.scale == Scale::LONG && cfg_.user_scoring) score_users(buf, spec.index, spec.end(), ready);
  if (!ready && buf.scale == Scale::LONG && spec.end() == prefix_end) {
    auto model = calibrate(prefix_, cfg_.calibration);
    model.users = users_;
    baseline_ = std::move(model);
    prefix_.clear();
    prefix_.shrink_to_fit();
  }
  if (window_sink_) window_sink_(f, emitted_in_window_);

  buf.events.clear();
  buf.cdrs.clear();
  ++buf.next_index;
  if (buf.scale == cfg_.detection_scale && buf.next_index * buf.width < horizon_) {
    begin_detection_window(buf.next_index);
  }
}

void DetectorPipeline::detect(const WindowFeatures& f) {
  const auto& b = baseline_->scale(cfg_.detection_scale).for_window(f.start);
  const SimTime end = f.start + f.width_ms;
  const auto c = cusum_step(cusum_, static_cast<double>(f.promotion_count), b.mu0, b.sigma0, cfg_.cusum);
  cusum_ = c.state;
  const auto y = bayes_step(bayes_, f.msg_count, b.lambda0, cfg_.bayes);
  bayes_ = y.state;

  auto network = [&](DetectorKind kind, double score) {
    Alarm a;
    a.t_raised = end;
    a.scope = AlarmScope::NETWORK;
    a.detector = kind;
    a.score = score;
    a.window_index = f.window_index;
    return a;
  };
  if (c.alarm) emit(network(DetectorKind::CUSUM, c.score));
  if (y.alarm) emit(network(DetectorKind::BAYES, y.score));

  std::optional<ClassPosterior> posterior;
  if (model_) {
    posterior = classify(*model_, f);
    const auto top = argmax(*posterior);
    if (top != 0 && (*posterior)[top] >= cfg_.fusion.confidence_min) {
      auto a = network(DetectorKind::NEURAL, (*posterior)[top]);
      a.attack_class = window_class_to_attack(top);
      a.confidence = (*posterior)[top];
      emit(a);
    }
  }
  if (auto a = fuse(c.score, y.score, posterior, cfg_.fusion, cfg_.cusum, cfg_.bayes, FuseContext{end, f.window_index})) {
    emit(*a);
  }
}

void DetectorPipeline::score_users(const ScaleBuffer& buf, std::uint64_t index, SimTime end, bool emit_alarms) {
  std::map<Pseudonym, UserWindow> seen;
  for (const auto& c : buf.cdrs) {
    const auto& who = std::get<Pseudonym>(c.ue);
    auto& w = seen[who];
    if (is_premium(c.kind)) w.premium_charge_units += static_cast<double>(c.charge) / 1000.0;
    if (is_sms(c.kind)) w.sms_out_count += 1.0;
  }

  // Every known user is scored each window; a silent user contributes zeros.
  std::vector<kernels::UserEntry> entries;
  entries.reserve(users_.size() + seen.size());
  auto u = users_.begin();
  auto s = seen.begin();
  while (u != users_.end() || s != seen.end()) {
    if (s == seen.end() || (u != users_.end() && u->first < s->first)) {
      entries.push_back({u->first, u->second, UserWindow{}});
      ++u;
    } else if (u == users_.end() || s->first < u->first) {
      entries.push_back({s->first, std::nullopt, s->second});
      ++s;
    } else {
      entries.push_back({u->first, u->second, s->second});
      ++u;
      ++s;
    }
  }

  const auto scores = kernels::score_users(entries, cfg_.user);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    users_[entries[i].user] = scores[i].updated;
    if (emit_alarms && scores[i].alarm) {
      Alarm a;
      a.t_raised = end;
      a.scope = AlarmScope::USER;
      a.user = entries[i].user;
      a.detector = DetectorKind::USER_SCORE;
      a.score = scores[i].z;
      a.window_index = index;
      emit(a);
    }
  }
}

void DetectorPipeline::begin_detection_window(std::uint64_t index) {
  auto it = pending_.find(index);
  if (it == pending_.end()) return;
  for (const auto& m : it->second) {
    if (m.kind == "tune") cfg_ = apply_detector_patch(cfg_, m.payload);
    emit(m);
  }
  pending_.erase(it);
}

}  // namespace mobisec
