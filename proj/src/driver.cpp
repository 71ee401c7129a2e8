#include "mixgda/driver.hpp"

#include <sstream>
#include <stdexcept>

namespace mixgda {

std::vector<Sample> load_samples(const std::string& kind, const std::string& paths) {
    std::vector<Sample> all;
    std::stringstream ss(paths);
    std::string path;
    while (std::getline(ss, path, ',')) {
        if (path.empty()) continue;
        if (kind == "cifar10" || kind == "cifar100") {
            auto part =
                load_cifar_binary(path, kind == "cifar10" ? CifarVariant::cifar10 : CifarVariant::cifar100);
            all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        } else if (kind == "raw") {
            auto part = load_raw(path);
            all.insert(all.end(), std::make_move_iterator(part.samples.begin()),
                       std::make_move_iterator(part.samples.end()));
        } else {
            throw std::runtime_error("unsupported dataset kind '" + kind + "' for file loading");
        }
    }
    if (all.empty()) throw std::runtime_error("no samples loaded from '" + paths + "'");
    return all;
}

TrainData prepare_data(const RunConfig& cfg) {
    TrainData data;
    if (cfg.dataset_kind == "synthetic") {
        SyntheticSpec spec;
        spec.n = cfg.synth_n;
        spec.num_classes = cfg.synth_classes;
        spec.side = cfg.synth_side;
        spec.channels = cfg.synth_channels;
        spec.noise = cfg.synth_noise;
        spec.angle_jitter = cfg.synth_angle_jitter;
        spec.seed = derive_seed(cfg.seed, 0x5AD0);
        std::vector<Sample> pool = make_synthetic(spec);
        data.pools = split(pool, cfg.n_labeled, cfg.num_classes, cfg.seed);
        spec.n = cfg.synth_test_n;
        spec.seed = derive_seed(cfg.seed, 0x5AD1);
        data.test_set = make_synthetic(spec);
        return data;
    }
    std::vector<Sample> pool = load_samples(cfg.dataset_kind, cfg.dataset_path);
    bool has_unlabeled_records = false;
    for (const Sample& s : pool)
        if (!s.label) {
            has_unlabeled_records = true;
            break;
        }
    if (has_unlabeled_records) {
        // raw container already carries the labeled/unlabeled partition
        for (Sample& s : pool)
            if (s.label)
                data.pools.labeled.push_back(std::move(s));
            else
                data.pools.unlabeled.push_back(std::move(s));
        data.pools.seed = cfg.seed;
    } else {
        data.pools = split(pool, cfg.n_labeled, cfg.num_classes, cfg.seed);
    }
    if (!cfg.test_path.empty()) data.test_set = load_samples(cfg.dataset_kind, cfg.test_path);
    return data;
}

RunOutcome run_config(const RunConfig& cfg, const std::string& interrupt_checkpoint_path) {
    TrainData data = prepare_data(cfg);
    NetworkState net = NetworkState::build(cfg.network_config(), derive_seed(cfg.seed, 0x11));

    TrainOptions topts;
    topts.eval_every_cycles = cfg.eval_every_cycles;
    topts.eval_set = data.test_set.empty() ? nullptr : &data.test_set;
    topts.interrupt_checkpoint_path = interrupt_checkpoint_path;
    RunOutcome out;
    out.result =
        run_training(data.pools, net, cfg.hyper_params(), cfg.schedule(), cfg.batch_options(), cfg.seed, topts);
    out.prime_net = net;
    out.averaged_net = net;

    // prime model: BN statistics refreshed the same way as for the averaged model
    out.prime_net.load(out.result.prime_theta);
    Rng bn_rng(derive_seed(cfg.seed, 0xB2));
    out.prime_net.recalibrate_bn(data.pools.labeled, bn_rng);
    out.prime_net.set_mode(NetMode::eval);
    if (!data.test_set.empty()) out.error_prime = out.prime_net.evaluate(data.test_set);

    Rng bn_rng2(derive_seed(cfg.seed, 0xB3));
    finalize(out.result.averaged, out.averaged_net, data.pools.labeled, bn_rng2);
    if (!data.test_set.empty()) out.error_averaged = out.averaged_net.evaluate(data.test_set);
    return out;
}

}  // namespace mixgda
