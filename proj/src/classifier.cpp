#include "mobisec/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mobisec/kernels.hpp"
#include "mobisec/rng.hpp"

namespace mobisec {

namespace {

constexpr double kAbsentClassLogit = -30.0;
constexpr double kLossTolerance = 1e-6;

double log_count(double x) { return std::log1p(x); }

double opt_or_nan(const std::optional<double>& v) { return v ? *v : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::array<double, kFeatureDim> raw_feature_vector(const WindowFeatures& f) {
  return {log_count(static_cast<double>(f.promotion_count)),
          log_count(static_cast<double>(f.demotion_count)),
          log_count(static_cast<double>(f.msg_count)),
          f.mean_interevent_ms ? log_count(*f.mean_interevent_ms) : std::numeric_limits<double>::quiet_NaN(),
          opt_or_nan(f.cv_interevent),
          opt_or_nan(f.lag1_autocorr),
          log_count(static_cast<double>(f.active_users)),
          log_count(static_cast<double>(f.premium_cdr_count)),
          log_count(static_cast<double>(std::max<std::int64_t>(0, f.premium_charge_sum))),
          log_count(static_cast<double>(f.sms_out_count)),
          log_count(static_cast<double>(f.distinct_peers))};
}

std::vector<double> ClassifierModel::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  p.insert(p.end(), w1.begin(), w1.end());
  p.insert(p.end(), b1.begin(), b1.end());
  p.insert(p.end(), w2.begin(), w2.end());
  p.insert(p.end(), b2.begin(), b2.end());
  return p;
}

void ClassifierModel::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ContractViolation("classifier: parameter count mismatch");
  auto it = flat.begin();
  for (auto* v : {&w1, &b1, &w2, &b2}) {
    std::copy_n(it, v->size(), v->begin());
    it += static_cast<std::ptrdiff_t>(v->size());
  }
}

std::array<double, kFeatureDim> standardize(const ClassifierModel& m, const WindowFeatures& f) {
  auto x = raw_feature_vector(f);
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    x[i] = std::isnan(x[i]) ? 0.0 : (x[i] - m.feat_mean[i]) / m.feat_std[i];
  }
  return x;
}

std::array<double, kNumWindowClasses> logits(const ClassifierModel& m, std::span<const double> x) {
  std::vector<double> h(m.hidden);
  for (std::size_t j = 0; j < m.hidden; ++j) {
    double a = m.b1[j];
    for (std::size_t i = 0; i < m.input_dim; ++i) a += m.w1[j * m.input_dim + i] * x[i];
    h[j] = std::tanh(a);
  }
  std::array<double, kNumWindowClasses> z{};
  for (std::size_t c = 0; c < kNumWindowClasses; ++c) {
    double a = m.b2[c];
    for (std::size_t j = 0; j < m.hidden; ++j) a += m.w2[c * m.hidden + j] * h[j];
    z[c] = a;
  }
  return z;
}

ClassPosterior predict(const ClassifierModel& m, std::span<const double> x) {
  const auto z = logits(m, x);
  const double zmax = *std::max_element(z.begin(), z.end());
  ClassPosterior p{};
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumWindowClasses; ++c) {
    p[c] = std::exp(z[c] - zmax);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

ClassPosterior classify(const ClassifierModel& m, const WindowFeatures& f) {
  const auto x = standardize(m, f);
  return predict(m, x);
}

double loss_and_gradient(const ClassifierModel& m, std::span<const double> xs, std::span<const std::size_t> labels,
                         std::vector<double>* grad) {
  std::vector<std::size_t> rows(labels.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto r = kernels::batch_gradient_serial(m, xs, labels, rows);
  if (grad != nullptr) *grad = r.gradient;
  return r.loss;
}

namespace {

void check_training_set(std::span<const LabeledWindow> data) {
  std::array<std::size_t, kNumWindowClasses> counts{};
  for (const auto& d : data) {
    if (d.label >= kNumWindowClasses) throw ValidationError("train_classifier: label out of range");
    ++counts[d.label];
  }
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  if (present < 2) throw ValidationError("train_classifier: need at least two classes");
}

}  // namespace

ClassifierModel train_classifier(std::span<const LabeledWindow> data, const ClassifierParams& params) {
  check_training_set(data);
  if (params.hidden == 0 || params.batch_size == 0 || !(params.learning_rate > 0.0)) {
    throw ValidationError("train_classifier: hidden, batch_size and learning_rate must be > 0");
  }
  const std::size_t n = data.size();
  const std::size_t F = kFeatureDim;
  const std::size_t H = params.hidden;

  ClassifierModel m;
  m.input_dim = F;
  m.hidden = H;
  m.feat_mean.assign(F, 0.0);
  m.feat_std.assign(F, 1.0);

  // Standardization from the training set, ignoring absent statistics.
  std::vector<std::array<double, kFeatureDim>> raw(n);
  for (std::size_t r = 0; r < n; ++r) raw[r] = raw_feature_vector(data[r].features);
  for (std::size_t i = 0; i < F; ++i) {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t cnt = 0;
    for (const auto& x : raw) {
      if (std::isnan(x[i])) continue;
      sum += x[i];
      sq += x[i] * x[i];
      ++cnt;
    }
    if (cnt == 0) continue;
    const double mean = sum / static_cast<double>(cnt);
    const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(cnt) - mean * mean));
    m.feat_mean[i] = mean;
    m.feat_std[i] = sd > 1e-9 ? sd : 1.0;
  }
  std::vector<double> xs(n * F);
  std::vector<std::size_t> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < F; ++i) {
      xs[r * F + i] = std::isnan(raw[r][i]) ? 0.0 : (raw[r][i] - m.feat_mean[i]) / m.feat_std[i];
    }
    labels[r] = data[r].label;
  }

  Rng rng(derive_seed(params.seed, StreamTag::kClassifier, 0));
  const double limit = std::sqrt(6.0 / static_cast<double>(F + H));
  m.w1.resize(H * F);
  for (auto& w : m.w1) w = (2.0 * rng.uniform() - 1.0) * limit;
  m.b1.assign(H, 0.0);
  m.w2.assign(kNumWindowClasses * H, 0.0);
  std::array<std::size_t, kNumWindowClasses> counts{};
  for (auto l : labels) ++counts[l];
  m.b2.resize(kNumWindowClasses);
  for (std::size_t c = 0; c < kNumWindowClasses; ++c) {
    m.b2[c] = counts[c] > 0 ? std::log(static_cast<double>(counts[c]) / static_cast<double>(n)) : kAbsentClassLogit;
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  double lr = params.learning_rate;
  double current = kernels::batch_gradient(m, xs, labels, all).loss;
  m.meta.loss_curve.push_back(current);

  std::vector<std::size_t> order = all;
  std::size_t epoch = 0;
  while (epoch < params.epochs) {
    const auto saved = m.parameters();
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    auto flat = saved;
    for (std::size_t b = 0; b < n; b += params.batch_size) {
      const std::span<const std::size_t> batch(order.data() + b, std::min(params.batch_size, n - b));
      const auto g = kernels::batch_gradient(m, xs, labels, batch);
      for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= lr * g.gradient[k];
      m.set_parameters(flat);
    }
    const double next = kernels::batch_gradient(m, xs, labels, all).loss;
    if (next > current + kLossTolerance || !std::isfinite(next)) {
      m.set_parameters(saved);
      lr *= 0.5;
      ++m.meta.lr_halvings;
      if (m.meta.lr_halvings > params.max_halvings) break;
      continue;
    }
    current = next;
    m.meta.loss_curve.push_back(current);
    ++epoch;
  }
  m.meta.epochs = epoch;
  m.meta.final_learning_rate = lr;
  return m;
}

void to_json(json& j, const ClassifierParams& p) {
  j = json{{"hidden", p.hidden},         {"epochs", p.epochs}, {"learning_rate", p.learning_rate},
           {"batch_size", p.batch_size}, {"seed", p.seed},     {"max_halvings", p.max_halvings}};
}

void from_json(const json& j, ClassifierParams& p) {
  p.hidden = j.value("hidden", p.hidden);
  p.epochs = j.value("epochs", p.epochs);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.seed = j.value("seed", p.seed);
  p.max_halvings = j.value("max_halvings", p.max_halvings);
}

void to_json(json& j, const ClassifierModel& m) {
  j = json{{"format", "mobisec-classifier"},
           {"version", 1},
           {"input_dim", m.input_dim},
           {"hidden", m.hidden},
           {"classes", {"NORMAL", "SIGNALING_STORM", "PREMIUM_ABUSE", "SMS_SPAM"}},
           {"feat_mean", m.feat_mean},
           {"feat_std", m.feat_std},
           {"w1", m.w1},
           {"b1", m.b1},
           {"w2", m.w2},
           {"b2", m.b2},
           {"training",
            {{"epochs", m.meta.epochs},
             {"loss_curve", m.meta.loss_curve},
             {"lr_halvings", m.meta.lr_halvings},
             {"final_learning_rate", m.meta.final_learning_rate}}}};
}

void from_json(const json& j, ClassifierModel& m) {
  if (j.value("format", std::string{}) != "mobisec-classifier" || j.value("version", 0) != 1) {
    throw ValidationError("classifier: unsupported model format or version");
  }
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.hidden = j.at("hidden").get<std::size_t>();
  m.feat_mean = j.at("feat_mean").get<std::vector<double>>();
  m.feat_std = j.at("feat_std").get<std::vector<double>>();
  m.w1 = j.at("w1").get<std::vector<double>>();
  m.b1 = j.at("b1").get<std::vector<double>>();
  m.w2 = j.at("w2").get<std::vector<double>>();
  m.b2 = j.at("b2").get<std::vector<double>>();
  const auto& t = j.at("training");
  m.meta.epochs = t.at("epochs").get<std::size_t>();
  m.meta.loss_curve = t.at("loss_curve").get<std::vector<double>>();
  m.meta.lr_halvings = t.at("lr_halvings").get<std::size_t>();
  m.meta.final_learning_rate = t.at("final_learning_rate").get<double>();
  if (m.input_dim != kFeatureDim || m.feat_mean.size() != m.input_dim || m.feat_std.size() != m.input_dim ||
      m.w1.size() != m.hidden * m.input_dim || m.b1.size() != m.hidden || m.w2.size() != kNumWindowClasses * m.hidden ||
      m.b2.size() != kNumWindowClasses) {
    throw ValidationError("classifier: inconsistent model dimensions");
  }
  for (const auto* v : {&m.w1, &m.b1, &m.w2, &m.b2}) {
    for (double w : *v) {
      if (!std::isfinite(w)) throw ValidationError("classifier: non-finite weight");
    }
  }
}

}  // namespace mobisec
