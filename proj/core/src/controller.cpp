#include "ipfsim/controller.hpp"

#include <bit>
#include <cassert>
#include <cmath>

namespace ipf {

FeatureVector make_features(LineAddr source, LineAddr window_base,
                            unsigned marked_offsets, double recent_hit_rate,
                            double pollution_rate, bool short_loop,
                            std::uint8_t thread_tag) {
  FeatureVector f{};
  const std::int64_t delta =
      static_cast<std::int64_t>(window_base) - static_cast<std::int64_t>(source);
  const std::uint64_t mag = static_cast<std::uint64_t>(delta < 0 ? -delta : delta);
  f[0] = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
  f[1] = std::popcount(mag) / 20.0;
  f[2] = double(mag & 0xFF) / 255.0;
  f[3] = std::log2(double(mag) + 1.0) / 20.0;
  f[4] = std::popcount(marked_offsets & 0xFFu) / 8.0;
  f[5] = recent_hit_rate;
  f[6] = pollution_rate;
  f[7] = short_loop ? 1.0 : 0.0;
  // Thread tag as dummy-coded buckets 1..7; bucket 0 folds into the bias.
  const unsigned bucket = thread_tag & 7;
  if (bucket >= 1) f[7 + bucket] = 1.0;
  f[15] = 1.0;
  return f;
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double score(const FeatureVector& features, const WeightVector& weights) {
  double dot = 0.0;
  for (std::size_t i = 0; i < kFeatureDim; ++i) dot += features[i] * weights[i];
  return sigmoid(dot);
}

WeightVector logistic_gradient(const WeightVector& weights,
                               std::span<const LabeledSample> batch) {
  WeightVector grad{};
  if (batch.empty()) return grad;
  for (const LabeledSample& s : batch) {
    const double err = score(s.features, weights) - s.label;
    for (std::size_t i = 0; i < kFeatureDim; ++i) grad[i] += err * s.features[i];
  }
  for (double& g : grad) g /= double(batch.size());
  return grad;
}

EpsilonGreedyBandit::EpsilonGreedyBandit(std::size_t arms, double epsilon,
                                         std::uint64_t seed)
    : means_(arms, 0.0), pulls_(arms, 0), epsilon_(epsilon), rng_(seed) {
  assert(arms > 0);
}

std::size_t EpsilonGreedyBandit::select() {
  if (rng_.chance(epsilon_)) return rng_.uniform(means_.size());
  std::size_t best = 0;
  for (std::size_t i = 1; i < means_.size(); ++i) {
    if (means_[i] > means_[best]) best = i;
  }
  return best;
}

void EpsilonGreedyBandit::record(std::size_t arm, double reward) {
  assert(arm < means_.size());
  ++pulls_[arm];
  means_[arm] += (reward - means_[arm]) / double(pulls_[arm]);
}

std::vector<Arm> arm_grid() {
  std::vector<Arm> arms;
  for (double t : {0.3, 0.4, 0.5, 0.6, 0.7}) {
    for (unsigned w : {8u, 4u, 12u}) arms.push_back({t, w});
  }
  return arms;
}

Controller::Controller(const ControllerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      arms_(arm_grid()),
      bandit_(arms_.size(), cfg.epsilon, seed),
      next_update_(cfg.update_period_cycles) {}

Decision Controller::decide(const FeatureVector& features) {
  Decision d;
  d.probability = score(features, weights_);
  d.arm_index = arm_index_;
  d.arm = arms_[arm_index_];
  const bool wants = d.probability >= d.arm.threshold;
  d.issue = wants && !cfg_.shadow;
  if (cfg_.shadow) ++shadow_decisions;
  return d;
}

std::uint64_t Controller::open_decision(Cycle now, const FeatureVector& features,
                                        double probability,
                                        unsigned target_count) {
  assert(target_count > 0);
  Open d;
  d.id = next_decision_id_++;
  d.features = features;
  d.probability = probability;
  d.arm_index = arm_index_;
  d.pending = target_count;
  open_.push_back(d);
  issued_targets += target_count;
  ++decisions_opened;
  (void)now;
  return d.id;
}

void Controller::target_resolved(std::uint64_t decision_id,
                                 TargetOutcome outcome) {
  for (auto it = open_.begin(); it != open_.end(); ++it) {
    if (it->id != decision_id) continue;
    switch (outcome) {
      case TargetOutcome::Hit: ++it->hits; ++hit_targets; break;
      case TargetOutcome::Useless: ++it->useless; ++useless_targets; break;
      case TargetOutcome::Polluting: ++it->polluting; ++polluting_targets; break;
    }
    assert(it->pending > 0);
    if (--it->pending == 0) {
      finalize(*it);
      open_.erase(it);
    }
    return;
  }
  assert(false && "resolution for unknown decision");
}

void Controller::finalize(Open& d) {
  const double reward = double(d.hits) - cfg_.lambda_useless * d.useless -
                        cfg_.lambda_evict * d.polluting;
  bandit_.record(d.arm_index, reward);
  batch_.push_back({d.features, reward > 0.0 ? 1.0 : 0.0});
}

void Controller::tick(Cycle now) {
  if (now < next_update_) return;
  if (!batch_.empty()) {
    const WeightVector grad = logistic_gradient(weights_, batch_);
    for (std::size_t i = 0; i < kFeatureDim; ++i)
      weights_[i] -= cfg_.learning_rate * grad[i];
    batch_.clear();
  }
  arm_index_ = bandit_.select();
  while (next_update_ <= now) next_update_ += cfg_.update_period_cycles;
}

}  // namespace ipf
