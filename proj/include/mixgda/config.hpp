#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixgda/network.hpp"
#include "mixgda/objective.hpp"
#include "mixgda/trainer.hpp"

namespace mixgda {

/// Flat run configuration: dataset spec, every hyperparameter knob, schedule
/// constants and the seed. Serialized as flat JSON.
struct RunConfig {
    // dataset
    std::string dataset_kind = "synthetic";  // cifar10 | cifar100 | raw | synthetic
    std::string dataset_path;
    std::string test_path;
    int n_labeled = 40;
    int synth_n = 2040;
    int synth_test_n = 500;
    int synth_classes = 2;
    int synth_side = 8;
    int synth_channels = 3;
    double synth_noise = 0.35;
    double synth_angle_jitter = 0.2;

    // model
    std::string arch = "tiny";  // tiny | table6
    int num_classes = 2;
    int image_side = 8;
    int image_channels = 3;
    bool weight_norm = false;
    bool final_bn = false;

    // augmentation
    bool flip_enabled = false;
    int max_shift = 2;

    // objective (Table-1 knobs)
    double a = 0.5;
    double alpha = 0.1;
    std::string mixup = "self";           // mixup | self
    std::string d_rel_label = "cosine";   // cosine | inner (Self-mixup only)
    std::string reliability = "entropy";  // entropy | l2norm
    double delta_gvat = 0.0;
    double eps_gvat = 3.5;
    double rho_gccb = 0.0;
    int m_ccb = 8;
    double mag_cont = 0.4;
    double mag_bri = 0.1;
    double rho_groi = 0.0;
    int m_roi = 4;
    double lambda_rate = 0.5;
    double zeta_groi = 0.8;
    double delta_xu = 0.0;
    double zeta_xu = 0.5;
    double beta = 0.8;
    bool gda_batch_stats = true;

    // schedule
    double lr0 = 0.001;
    int n_cycle = 10;
    int n_decay = 6;
    int steps_per_cycle = 400;
    int m_labeled = 8;
    int m_unlabeled = 16;

    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int eval_every_cycles = 0;

    HyperParams hyper_params() const;
    Schedule schedule() const;
    BatchOptions batch_options() const;
    NetworkConfig network_config() const;
};

/// Field-level validation messages; empty means the config is usable.
std::vector<std::string> validate(const RunConfig& cfg);

std::string to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);

bool operator==(const RunConfig& a, const RunConfig& b);

/// Shipped presets: one per Table-1 column (svhn-250/500/1000,
/// cifar10-250/1000/2000/4000, cifar100-10000) plus the synthetic desk-scale
/// runs (synth-smoke, synth-supervised, synth-mini).
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace mixgda
