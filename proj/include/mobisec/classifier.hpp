#pragma once

#include <array>
#include <span>
#include <vector>

#include "mobisec/detector.hpp"
#include "mobisec/features.hpp"

namespace mobisec {

inline constexpr std::size_t kFeatureDim = 11;

// Raw classifier inputs for a window. Counts enter as log1p(count); absent
// statistics are NaN here and become 0 after standardization.
std::array<double, kFeatureDim> raw_feature_vector(const WindowFeatures& f);

struct ClassifierParams {
  std::size_t hidden = 16;
  std::size_t epochs = 200;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t max_halvings = 40;
  bool operator==(const ClassifierParams&) const = default;
};

struct LabeledWindow {
  WindowFeatures features;
  std::size_t label = 0;  // index into ClassPosterior
};

struct TrainingMetadata {
  std::size_t epochs = 0;
  std::vector<double> loss_curve;  // full training loss after init and after each epoch
  std::size_t lr_halvings = 0;
  double final_learning_rate = 0.0;
  bool operator==(const TrainingMetadata&) const = default;
};

// One hidden tanh layer, softmax output over the four window classes.
struct ClassifierModel {
  std::size_t input_dim = kFeatureDim;
  std::size_t hidden = 0;
  std::vector<double> feat_mean;
  std::vector<double> feat_std;
  std::vector<double> w1;  // hidden x input, row-major
  std::vector<double> b1;
  std::vector<double> w2;  // classes x hidden, row-major
  std::vector<double> b2;
  TrainingMetadata meta;

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  bool operator==(const ClassifierModel&) const = default;
};

std::array<double, kFeatureDim> standardize(const ClassifierModel& m, const WindowFeatures& f);

// Softmax posterior for an already standardized input.
ClassPosterior predict(const ClassifierModel& m, std::span<const double> x);

ClassPosterior classify(const ClassifierModel& m, const WindowFeatures& f);

// Output-layer logits for a standardized input.
std::array<double, kNumWindowClasses> logits(const ClassifierModel& m, std::span<const double> x);

// Mean cross-entropy over the rows of xs (n x input_dim, standardized) and,
// if grad is non-null, its gradient in parameters() order.
double loss_and_gradient(const ClassifierModel& m, std::span<const double> xs, std::span<const std::size_t> labels,
                         std::vector<double>* grad);

// Mini-batch gradient descent on mean cross-entropy. The recorded training
// loss never increases by more than 1e-6 between epochs: an epoch that would
// raise it is undone and retried at half the learning rate. Throws
// ValidationError when fewer than two classes are present.
ClassifierModel train_classifier(std::span<const LabeledWindow> data, const ClassifierParams& params);

void to_json(json& j, const ClassifierParams& p);
void from_json(const json& j, ClassifierParams& p);
void to_json(json& j, const ClassifierModel& m);
void from_json(const json& j, ClassifierModel& m);

}  // namespace mobisec
