#pragma once

#include "mixgda/config.hpp"
#include "mixgda/dataset.hpp"
#include "mixgda/network.hpp"
#include "mixgda/trainer.hpp"

namespace mixgda {

struct TrainData {
    SplitPools pools;
    std::vector<Sample> test_set;
};

/// Loads dataset files named by dataset_path (comma separated for CIFAR
/// batch files).
std::vector<Sample> load_samples(const std::string& kind, const std::string& paths);

/// Assembles the labeled/unlabeled pools and the test set for a config.
/// Raw containers with 0xFFFF records carry their own partition; everything
/// else goes through the stratified split.
TrainData prepare_data(const RunConfig& cfg);

struct RunOutcome {
    TrainResult result;
    NetworkState prime_net;     // weights at termination, BN refreshed, eval mode
    NetworkState averaged_net;  // snapshot average, finalized
    double error_prime = -1.0;
    double error_averaged = -1.0;  // -1 when the config has no test set
};

/// Full pipeline: data, training, BN recalibration for both models,
/// evaluation. Pure function of the config (no file output).
RunOutcome run_config(const RunConfig& cfg, const std::string& interrupt_checkpoint_path = "");

}  // namespace mixgda
