#include "mixgda/config.hpp"

#include <stdexcept>

#include "json.hpp"

namespace mixgda {

HyperParams RunConfig::hyper_params() const {
    HyperParams hp;
    hp.num_classes = num_classes;
    hp.a = a;
    hp.rel_kind = reliability == "l2norm" ? ReliabilityKind::l2norm : ReliabilityKind::entropy;
    hp.label_rel_kind = d_rel_label == "inner" ? ReliabilityKind::inner : ReliabilityKind::cosine;
    hp.use_self_mixup = mixup == "self";
    hp.alpha = alpha;
    hp.delta_gvat = delta_gvat;
    hp.eps_gvat = eps_gvat;
    hp.rho_gccb = rho_gccb;
    hp.m_ccb = m_ccb;
    hp.mag_cont = mag_cont;
    hp.mag_bri = mag_bri;
    hp.rho_groi = rho_groi;
    hp.m_roi = m_roi;
    hp.lambda_rate = lambda_rate;
    hp.zeta_groi = zeta_groi;
    hp.delta_xu = delta_xu;
    hp.zeta_xu = zeta_xu;
    hp.beta_inner = beta;
    hp.gda_batch_stats = gda_batch_stats;
    return hp;
}

Schedule RunConfig::schedule() const {
    Schedule s;
    s.n_cycle = n_cycle;
    s.n_decay = n_decay;
    s.steps_per_cycle = steps_per_cycle;
    s.lr0 = lr0;
    return s;
}

BatchOptions RunConfig::batch_options() const {
    BatchOptions b;
    b.m_labeled = m_labeled;
    b.m_unlabeled = m_unlabeled;
    b.flip_enabled = flip_enabled;
    b.max_shift = max_shift;
    return b;
}

NetworkConfig RunConfig::network_config() const {
    NetworkConfig nc;
    nc.arch = arch == "table6" ? Arch::table6 : Arch::tiny;
    nc.num_classes = num_classes;
    nc.image_side = image_side;
    nc.image_channels = image_channels;
    nc.weight_norm = weight_norm;
    nc.final_bn = final_bn;
    return nc;
}

std::vector<std::string> validate(const RunConfig& cfg) {
    std::vector<std::string> errs;
    auto fail = [&](const std::string& field, const std::string& why) { errs.push_back(field + ": " + why); };

    if (cfg.dataset_kind != "cifar10" && cfg.dataset_kind != "cifar100" && cfg.dataset_kind != "raw" &&
        cfg.dataset_kind != "synthetic")
        fail("dataset_kind", "must be cifar10, cifar100, raw or synthetic");
    if (cfg.dataset_kind != "synthetic" && cfg.dataset_path.empty())
        fail("dataset_path", "required for file-backed datasets");
    if (cfg.arch != "tiny" && cfg.arch != "table6") fail("arch", "must be tiny or table6");
    if (cfg.a < 0.0 || cfg.a > 1.0) fail("a", "must be in [0,1]");
    if (cfg.alpha <= 0.0) fail("alpha", "must be positive");
    if (cfg.mixup != "mixup" && cfg.mixup != "self") fail("mixup", "must be mixup or self");
    if (cfg.d_rel_label != "cosine" && cfg.d_rel_label != "inner")
        fail("d_rel_label", "must be cosine or inner");
    if (cfg.reliability != "entropy" && cfg.reliability != "l2norm")
        fail("reliability", "must be entropy or l2norm");
    if (cfg.delta_gvat != 0.0 && cfg.delta_gvat != 1.0) fail("delta_gvat", "on/off parameter, 0 or 1");
    if (cfg.delta_xu != 0.0 && cfg.delta_xu != 1.0) fail("delta_xu", "on/off parameter, 0 or 1");
    if (cfg.delta_gvat > 0.0 && cfg.eps_gvat <= 0.0) fail("eps_gvat", "must be positive");
    if (cfg.rho_gccb < 0.0) fail("rho_gccb", "must be nonnegative");
    if (cfg.rho_groi < 0.0) fail("rho_groi", "must be nonnegative");
    if (cfg.zeta_groi <= 0.5 || cfg.zeta_groi > 1.0) fail("zeta_groi", "must be in (0.5,1]");
    if (cfg.zeta_xu <= 0.0 || cfg.zeta_xu >= 1.0) fail("zeta_xu", "must be in (0,1)");
    if (cfg.lambda_rate < 0.0 || cfg.lambda_rate > 1.0) fail("lambda_rate", "must be in [0,1]");
    if (cfg.m_labeled <= 0 || cfg.m_unlabeled <= 0) fail("m_labeled/m_unlabeled", "must be positive");
    if (cfg.m_labeled > cfg.m_unlabeled) fail("m_labeled", "must not exceed m_unlabeled");
    if (cfg.rho_gccb > 0.0 && (cfg.m_ccb <= 0 || cfg.image_side % cfg.m_ccb != 0))
        fail("m_ccb", "image side " + std::to_string(cfg.image_side) + " not divisible by block size");
    if (cfg.rho_groi > 0.0 && (cfg.m_roi <= 0 || cfg.image_side % cfg.m_roi != 0))
        fail("m_roi", "image side " + std::to_string(cfg.image_side) + " not divisible by block size");
    if (cfg.n_cycle <= 0 || cfg.n_decay < 0 || cfg.n_decay >= cfg.n_cycle)
        fail("n_decay", "need 0 <= n_decay < n_cycle");
    if (cfg.steps_per_cycle <= 0) fail("steps_per_cycle", "must be positive");
    if (cfg.lr0 <= 0.0) fail("lr0", "must be positive");
    if (cfg.n_labeled <= 0) fail("n_labeled", "must be positive");
    return errs;
}

namespace {

using nlohmann::json;

template <typename T>
void get_to_if(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

std::string to_json(const RunConfig& c) {
    json j;
    j["dataset_kind"] = c.dataset_kind;
    j["dataset_path"] = c.dataset_path;
    j["test_path"] = c.test_path;
    j["n_labeled"] = c.n_labeled;
    j["synth_n"] = c.synth_n;
    j["synth_test_n"] = c.synth_test_n;
    j["synth_classes"] = c.synth_classes;
    j["synth_side"] = c.synth_side;
    j["synth_channels"] = c.synth_channels;
    j["synth_noise"] = c.synth_noise;
    j["synth_angle_jitter"] = c.synth_angle_jitter;
    j["arch"] = c.arch;
    j["num_classes"] = c.num_classes;
    j["image_side"] = c.image_side;
    j["image_channels"] = c.image_channels;
    j["weight_norm"] = c.weight_norm;
    j["final_bn"] = c.final_bn;
    j["flip_enabled"] = c.flip_enabled;
    j["max_shift"] = c.max_shift;
    j["a"] = c.a;
    j["alpha"] = c.alpha;
    j["mixup"] = c.mixup;
    j["d_rel_label"] = c.d_rel_label;
    j["reliability"] = c.reliability;
    j["delta_gvat"] = c.delta_gvat;
    j["eps_gvat"] = c.eps_gvat;
    j["rho_gccb"] = c.rho_gccb;
    j["m_ccb"] = c.m_ccb;
    j["mag_cont"] = c.mag_cont;
    j["mag_bri"] = c.mag_bri;
    j["rho_groi"] = c.rho_groi;
    j["m_roi"] = c.m_roi;
    j["lambda_rate"] = c.lambda_rate;
    j["zeta_groi"] = c.zeta_groi;
    j["delta_xu"] = c.delta_xu;
    j["zeta_xu"] = c.zeta_xu;
    j["beta"] = c.beta;
    j["gda_batch_stats"] = c.gda_batch_stats;
    j["lr0"] = c.lr0;
    j["n_cycle"] = c.n_cycle;
    j["n_decay"] = c.n_decay;
    j["steps_per_cycle"] = c.steps_per_cycle;
    j["m_labeled"] = c.m_labeled;
    j["m_unlabeled"] = c.m_unlabeled;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["eval_every_cycles"] = c.eval_every_cycles;
    return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    get_to_if(j, "dataset_kind", c.dataset_kind);
    get_to_if(j, "dataset_path", c.dataset_path);
    get_to_if(j, "test_path", c.test_path);
    get_to_if(j, "n_labeled", c.n_labeled);
    get_to_if(j, "synth_n", c.synth_n);
    get_to_if(j, "synth_test_n", c.synth_test_n);
    get_to_if(j, "synth_classes", c.synth_classes);
    get_to_if(j, "synth_side", c.synth_side);
    get_to_if(j, "synth_channels", c.synth_channels);
    get_to_if(j, "synth_noise", c.synth_noise);
    get_to_if(j, "synth_angle_jitter", c.synth_angle_jitter);
    get_to_if(j, "arch", c.arch);
    get_to_if(j, "num_classes", c.num_classes);
    get_to_if(j, "image_side", c.image_side);
    get_to_if(j, "image_channels", c.image_channels);
    get_to_if(j, "weight_norm", c.weight_norm);
    get_to_if(j, "final_bn", c.final_bn);
    get_to_if(j, "flip_enabled", c.flip_enabled);
    get_to_if(j, "max_shift", c.max_shift);
    get_to_if(j, "a", c.a);
    get_to_if(j, "alpha", c.alpha);
    get_to_if(j, "mixup", c.mixup);
    get_to_if(j, "d_rel_label", c.d_rel_label);
    get_to_if(j, "reliability", c.reliability);
    get_to_if(j, "delta_gvat", c.delta_gvat);
    get_to_if(j, "eps_gvat", c.eps_gvat);
    get_to_if(j, "rho_gccb", c.rho_gccb);
    get_to_if(j, "m_ccb", c.m_ccb);
    get_to_if(j, "mag_cont", c.mag_cont);
    get_to_if(j, "mag_bri", c.mag_bri);
    get_to_if(j, "rho_groi", c.rho_groi);
    get_to_if(j, "m_roi", c.m_roi);
    get_to_if(j, "lambda_rate", c.lambda_rate);
    get_to_if(j, "zeta_groi", c.zeta_groi);
    get_to_if(j, "delta_xu", c.delta_xu);
    get_to_if(j, "zeta_xu", c.zeta_xu);
    get_to_if(j, "beta", c.beta);
    get_to_if(j, "gda_batch_stats", c.gda_batch_stats);
    get_to_if(j, "lr0", c.lr0);
    get_to_if(j, "n_cycle", c.n_cycle);
    get_to_if(j, "n_decay", c.n_decay);
    get_to_if(j, "steps_per_cycle", c.steps_per_cycle);
    get_to_if(j, "m_labeled", c.m_labeled);
    get_to_if(j, "m_unlabeled", c.m_unlabeled);
    get_to_if(j, "seed", c.seed);
    get_to_if(j, "out_dir", c.out_dir);
    get_to_if(j, "eval_every_cycles", c.eval_every_cycles);
    return c;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return to_json(a) == to_json(b); }

namespace {

RunConfig svhn_base() {
    RunConfig c;
    c.dataset_kind = "raw";
    c.dataset_path = "data/svhn_train.mxgd";
    c.test_path = "data/svhn_test.mxgd";
    c.arch = "table6";
    c.num_classes = 10;
    c.image_side = 32;
    c.image_channels = 3;
    c.weight_norm = false;
    c.final_bn = true;
    c.flip_enabled = false;  // translation only for SVHN
    c.max_shift = 2;
    c.mixup = "self";
    c.d_rel_label = "inner";
    c.a = 0.5;
    c.delta_gvat = 1.0;
    c.eps_gvat = 3.5;
    c.rho_gccb = 1.2;
    c.m_ccb = 8;
    c.mag_cont = 0.4;
    c.mag_bri = 0.1;
    c.rho_groi = 0.9;
    c.m_roi = 4;
    c.lambda_rate = 0.5;
    c.zeta_groi = 0.8;
    c.delta_xu = 0.0;
    c.zeta_xu = 0.5;
    c.beta = 0.8;
    c.lr0 = 0.001;
    c.n_cycle = 120;
    c.n_decay = 80;
    c.m_labeled = 64;
    c.m_unlabeled = 96;
    return c;
}

RunConfig cifar10_base() {
    RunConfig c;
    c.dataset_kind = "cifar10";
    c.dataset_path = "data/cifar-10-batches-bin/data_batch_1.bin,data/cifar-10-batches-bin/data_batch_2.bin,"
                     "data/cifar-10-batches-bin/data_batch_3.bin,data/cifar-10-batches-bin/data_batch_4.bin,"
                     "data/cifar-10-batches-bin/data_batch_5.bin";
    c.test_path = "data/cifar-10-batches-bin/test_batch.bin";
    c.arch = "table6";
    c.num_classes = 10;
    c.image_side = 32;
    c.image_channels = 3;
    c.weight_norm = true;
    c.final_bn = false;
    c.flip_enabled = true;
    c.max_shift = 2;
    c.mixup = "mixup";
    c.d_rel_label = "cosine";
    c.alpha = 0.1;
    c.delta_gvat = 0.0;
    c.rho_gccb = 2.0;
    c.m_ccb = 8;
    c.mag_cont = 0.4;
    c.mag_bri = 0.1;
    c.rho_groi = 1.5;
    c.m_roi = 4;
    c.lambda_rate = 0.5;
    c.zeta_groi = 0.8;
    c.delta_xu = 1.0;
    c.zeta_xu = 0.5;
    c.beta = 0.8;
    c.lr0 = 0.00047;
    c.n_cycle = 500;
    c.n_decay = 460;
    c.m_labeled = 96;
    c.m_unlabeled = 96;
    return c;
}

RunConfig synth_base() {
    RunConfig c;  // defaults are already the synthetic desk-scale shape
    c.dataset_kind = "synthetic";
    c.arch = "tiny";
    c.num_classes = 2;
    c.synth_classes = 2;
    c.image_side = 8;
    c.synth_side = 8;
    c.n_labeled = 40;
    c.synth_n = 2040;
    c.synth_test_n = 500;
    c.synth_noise = 2.0;
    c.synth_angle_jitter = 0.6;
    c.mixup = "self";
    c.d_rel_label = "cosine";
    c.alpha = 0.3;
    c.a = 0.5;
    c.delta_gvat = 1.0;
    c.eps_gvat = 1.0;
    c.rho_gccb = 1.0;
    c.m_ccb = 4;
    c.mag_cont = 0.4;
    c.mag_bri = 0.1;
    c.rho_groi = 0.9;
    c.m_roi = 2;
    c.lambda_rate = 0.5;
    c.zeta_groi = 0.8;
    c.delta_xu = 1.0;
    c.zeta_xu = 0.5;
    c.beta = 0.8;
    c.lr0 = 0.003;
    c.n_cycle = 10;
    c.n_decay = 6;
    c.steps_per_cycle = 400;
    c.m_labeled = 8;
    c.m_unlabeled = 12;
    return c;
}

}  // namespace

RunConfig preset(const std::string& name) {
    if (name == "svhn-250") {
        RunConfig c = svhn_base();
        c.n_labeled = 250;
        c.a = 0.1;
        c.alpha = 0.1;
        return c;
    }
    if (name == "svhn-500") {
        RunConfig c = svhn_base();
        c.n_labeled = 500;
        c.a = 0.5;
        c.alpha = 0.2;
        return c;
    }
    if (name == "svhn-1000") {
        RunConfig c = svhn_base();
        c.n_labeled = 1000;
        c.a = 0.5;
        c.alpha = 0.3;
        return c;
    }
    if (name == "cifar10-250") {
        RunConfig c = cifar10_base();
        c.n_labeled = 250;
        c.a = 0.1;
        c.mixup = "self";
        return c;
    }
    if (name == "cifar10-1000") {
        RunConfig c = cifar10_base();
        c.n_labeled = 1000;
        c.a = 0.2;
        c.zeta_groi = 0.75;
        return c;
    }
    if (name == "cifar10-2000") {
        RunConfig c = cifar10_base();
        c.n_labeled = 2000;
        c.a = 0.35;
        return c;
    }
    if (name == "cifar10-4000") {
        RunConfig c = cifar10_base();
        c.n_labeled = 4000;
        c.a = 0.4;
        return c;
    }
    if (name == "cifar100-10000") {
        RunConfig c = cifar10_base();
        c.dataset_kind = "cifar100";
        c.dataset_path = "data/cifar-100-binary/train.bin";
        c.test_path = "data/cifar-100-binary/test.bin";
        c.num_classes = 100;
        c.n_labeled = 10000;
        c.a = 0.2;
        c.mixup = "self";
        c.mag_bri = 0.2;
        c.beta = 0.5;
        return c;
    }
    if (name == "synth-smoke") return synth_base();
    if (name == "synth-supervised") {
        RunConfig c = synth_base();
        c.delta_gvat = 0.0;
        c.rho_gccb = 0.0;
        c.rho_groi = 0.0;
        c.delta_xu = 0.0;
        c.beta = 1.1;  // empty confident set: Inner off, ce_xx alone remains
        return c;
    }
    if (name == "synth-mini") {
        RunConfig c = synth_base();
        c.synth_n = 120;
        c.synth_test_n = 60;
        c.n_labeled = 20;
        c.n_cycle = 2;
        c.n_decay = 1;
        c.steps_per_cycle = 5;
        c.m_labeled = 4;
        c.m_unlabeled = 8;
        return c;
    }
    throw std::invalid_argument("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    return {"svhn-250",    "svhn-500",    "svhn-1000",     "cifar10-250",      "cifar10-1000",
            "cifar10-2000", "cifar10-4000", "cifar100-10000", "synth-smoke",      "synth-supervised",
            "synth-mini"};
}

}  // namespace mixgda
