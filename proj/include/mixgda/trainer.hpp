#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixgda/dataset.hpp"
#include "mixgda/network.hpp"
#include "mixgda/objective.hpp"

namespace mixgda {

struct AdamState {
    std::vector<double> m, v;
    long t = 0;

    explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard Adam with bias correction; state persists across cycles and
/// across the beta1 switch at the decay boundary.
void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state, double lr,
               double beta1, double beta2, double eps = 1e-8);

/// Staged schedule: cycles 0..n_decay run at lr0 with beta1 = 0.9; cycles
/// n_decay+1..n_cycle-1 run at lr0*(n_cycle - nc)/(n_cycle - n_decay) with
/// beta1 = 0.5.
struct Schedule {
    int n_cycle = 0;
    int n_decay = 0;
    int steps_per_cycle = 400;
    double lr0 = 0.001;

    double lr_at(int nc) const;
    double beta1_at(int nc) const { return nc <= n_decay ? 0.9 : 0.5; }
    static constexpr double beta2 = 0.999;
};

/// Running arithmetic mean of end-of-cycle weight snapshots.
struct AveragedModel {
    std::vector<double> mean;
    long count = 0;

    void add(const std::vector<double>& theta);
};

struct BatchOptions {
    int m_labeled = 64;
    int m_unlabeled = 96;
    bool flip_enabled = false;
    int max_shift = 2;
};

struct TrainOptions {
    bool record_snapshots = false;
    int eval_every_cycles = 0;  // 0 = never
    const std::vector<Sample>* eval_set = nullptr;
    std::string interrupt_checkpoint_path;  // written if a step throws
};

struct TrainResult {
    std::vector<double> prime_theta;  // weights at termination
    AveragedModel averaged;
    std::string metrics_csv;  // one row per cycle
    std::vector<std::vector<double>> snapshots;  // when recorded
    long roi_empty_total = 0;
};

/// n_cycle * steps_per_cycle minibatch updates; snapshots enter the running
/// average at the end of every cycle nc with nc+1 >= n_decay (that is, at the
/// weights model(400*j) for j = n_decay..n_cycle).
TrainResult run_training(const SplitPools& pools, NetworkState& net, const HyperParams& hp,
                         const Schedule& sched, const BatchOptions& batch, std::uint64_t seed,
                         const TrainOptions& opts = {});

/// Loads the averaged weights, refreshes BN statistics from the labeled pool
/// and switches to eval mode.
void finalize(const AveragedModel& averaged, NetworkState& net, const std::vector<Sample>& labeled,
              Rng& rng);

}  // namespace mixgda
