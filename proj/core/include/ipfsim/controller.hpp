#ifndef IPFSIM_CONTROLLER_HPP
#define IPFSIM_CONTROLLER_HPP

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "ipfsim/compressed.hpp"
#include "ipfsim/rng.hpp"
#include "ipfsim/types.hpp"

namespace ipf {

// 16 features: 4 source->base delta summaries (sign, popcount/20, low 8
// bits/255, log2(|delta|+1)/20), window density, recent hit rate, pollution
// rate, short-loop flag, 7 thread-tag bucket dummies (bucket 0 folds into the
// bias), bias. Everything lies in [0,1] except the sign.
inline constexpr std::size_t kFeatureDim = 16;
using FeatureVector = std::array<double, kFeatureDim>;
using WeightVector = std::array<double, kFeatureDim>;

FeatureVector make_features(LineAddr source, LineAddr window_base,
                            unsigned marked_offsets, double recent_hit_rate,
                            double pollution_rate, bool short_loop,
                            std::uint8_t thread_tag);

double score(const FeatureVector& features, const WeightVector& weights);

struct LabeledSample {
  FeatureVector features{};
  double label = 0.0;
};

// Mean gradient of the logistic loss over the batch: (sigmoid(w.x) - y) * x.
WeightVector logistic_gradient(const WeightVector& weights,
                               std::span<const LabeledSample> batch);

// ---------------------------------------------------------------------------
// Epsilon-greedy bandit over a fixed arm list. Ties resolve to the lowest
// arm index, so arm ordering encodes the tie rule.
// ---------------------------------------------------------------------------
class EpsilonGreedyBandit {
 public:
  EpsilonGreedyBandit(std::size_t arms, double epsilon, std::uint64_t seed);

  std::size_t select();
  void record(std::size_t arm, double reward);

  std::size_t arm_count() const { return means_.size(); }
  double mean(std::size_t arm) const { return means_[arm]; }
  std::uint64_t pulls(std::size_t arm) const { return pulls_[arm]; }

 private:
  std::vector<double> means_;
  std::vector<std::uint64_t> pulls_;
  double epsilon_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Controller: logistic profitability gate, threshold/window arm grid,
// outcome ledger and periodic small-step weight updates.
// ---------------------------------------------------------------------------

struct Arm {
  double threshold = 0.5;
  unsigned window = 8;
};

// Canonical order: thresholds ascending; windows in preference order 8, 4,
// 12. Greedy ties therefore land on the lowest threshold, window 8.
std::vector<Arm> arm_grid();

struct ControllerConfig {
  double learning_rate = 0.01;
  Cycle update_period_cycles = 100000;
  double epsilon = 0.05;
  Cycle horizon_cycles = 10000;
  bool shadow = false;
  double lambda_useless = 0.5;
  double lambda_evict = 1.0;
};

enum class TargetOutcome : std::uint8_t { Hit, Useless, Polluting };

struct Decision {
  bool issue = false;   // false in shadow mode regardless of the score
  Arm arm;
  double probability = 0.0;
  std::size_t arm_index = 0;
};

class Controller {
 public:
  Controller(const ControllerConfig& cfg, std::uint64_t seed);

  Decision decide(const FeatureVector& features);

  // Ledger: a decision matures once all its targets resolve; reward then
  // goes to the arm that was active at issue time and the thresholded label
  // feeds the next weight update.
  std::uint64_t open_decision(Cycle now, const FeatureVector& features,
                              double probability, unsigned target_count);
  void target_resolved(std::uint64_t decision_id, TargetOutcome outcome);

  // Periodic work: weight step + arm re-selection once per update period.
  void tick(Cycle now);

  const WeightVector& weights() const { return weights_; }
  const ControllerConfig& config() const { return cfg_; }
  const Arm& current_arm() const { return arms_[arm_index_]; }
  std::size_t current_arm_index() const { return arm_index_; }

  // Ledger conservation counters.
  std::uint64_t issued_targets = 0;
  std::uint64_t hit_targets = 0;
  std::uint64_t useless_targets = 0;
  std::uint64_t polluting_targets = 0;
  std::uint64_t in_flight_targets() const {
    return issued_targets - hit_targets - useless_targets - polluting_targets;
  }
  std::uint64_t decisions_opened = 0;
  std::uint64_t shadow_decisions = 0;

 private:
  struct Open {
    std::uint64_t id = 0;
    FeatureVector features{};
    double probability = 0.0;
    std::size_t arm_index = 0;
    unsigned pending = 0;
    unsigned hits = 0, useless = 0, polluting = 0;
  };

  void finalize(Open& d);

  ControllerConfig cfg_;
  WeightVector weights_{};
  std::vector<Arm> arms_;
  EpsilonGreedyBandit bandit_;
  std::size_t arm_index_ = 0;
  std::deque<Open> open_;
  std::vector<LabeledSample> batch_;
  Cycle next_update_ = 0;
  std::uint64_t next_decision_id_ = 1;
};

}  // namespace ipf

#endif
