#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mixgda/config.hpp"
#include "mixgda/driver.hpp"
#include "mixgda/gda.hpp"
#include "mixgda/ppm.hpp"
#include "mixgda/trainer.hpp"
#include "mixgda/verify.hpp"

namespace fs = std::filesystem;
using namespace mixgda;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

RunConfig resolve_config(const std::string& preset_name, const std::string& config_path,
                         std::uint64_t seed_override, bool has_seed, const std::string& out_override) {
    RunConfig cfg;
    if (!preset_name.empty()) cfg = preset(preset_name);
    if (!config_path.empty()) cfg = config_from_json(read_text(config_path));
    if (has_seed) cfg.seed = seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

int reject_invalid(const RunConfig& cfg) {
    const std::vector<std::string> errs = validate(cfg);
    if (errs.empty()) return 0;
    std::cerr << "invalid config:\n";
    for (const std::string& e : errs) std::cerr << "  " << e << "\n";
    return 1;
}

int cmd_train(const RunConfig& cfg, bool dry_run) {
    if (int rc = reject_invalid(cfg)) return rc;
    if (dry_run) {
        std::cout << to_json(cfg);
        return 0;
    }
    fs::create_directories(cfg.out_dir);
    RunOutcome out = run_config(cfg, (fs::path(cfg.out_dir) / "interrupted.ckpt").string());

    write_text((fs::path(cfg.out_dir) / "metrics.csv").string(), out.result.metrics_csv);
    out.prime_net.save_checkpoint((fs::path(cfg.out_dir) / "prime.ckpt").string());
    out.averaged_net.save_checkpoint((fs::path(cfg.out_dir) / "averaged.ckpt").string());

    nlohmann::json summary;
    summary["final_error_prime"] = out.error_prime;
    summary["final_error_averaged"] = out.error_averaged;
    summary["seed"] = cfg.seed;
    summary["roi_empty_total"] = out.result.roi_empty_total;
    summary["config"] = nlohmann::json::parse(to_json(cfg));
    write_text((fs::path(cfg.out_dir) / "summary.json").string(), summary.dump(2) + "\n");

    std::cout << "error_prime=" << out.error_prime << " error_averaged=" << out.error_averaged << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& format) {
    if (!fs::exists(ckpt)) {
        std::cerr << "checkpoint not found: " << ckpt << "\n";
        return 2;
    }
    NetworkState net = NetworkState::load_checkpoint(ckpt);
    const std::vector<Sample> test = load_samples(format, data_path);
    const double err = net.evaluate(test);
    std::printf("error_rate=%.17g\n", err);
    return 0;
}

int cmd_augment(const RunConfig& cfg, const std::string& ckpt, const std::string& data_path,
                const std::string& format, const std::string& which, int count, const std::string& out_dir) {
    if (!fs::exists(ckpt)) {
        std::cerr << "checkpoint not found: " << ckpt << "\n";
        return 2;
    }
    NetworkState net = NetworkState::load_checkpoint(ckpt);
    std::vector<Sample> samples = load_samples(format, data_path);
    count = std::min<int>(count, static_cast<int>(samples.size()));
    samples.resize(static_cast<size_t>(count));
    fs::create_directories(out_dir);

    std::vector<Tensor> imgs;
    for (const Sample& s : samples) imgs.push_back(s.image);
    const Tensor batch = stack_images(imgs);
    GdaForwardOptions gopts;
    gopts.use_batch_stats = cfg.gda_batch_stats;
    Tensor probs;
    const GradField field = grad_field(net, batch, cfg.a, gopts, &probs);

    for (int i = 0; i < count; ++i) {
        const Tensor u = slice_image(batch, i);
        const Tensor f = slice_image(field.r3d, i);
        Tensor aug;
        long omega_size = -1;
        if (u.shape[0] % cfg.m_roi == 0)
            omega_size = static_cast<long>(roi_partition(f, cfg.m_roi, cfg.lambda_rate).omega_low.size());
        if (which == "gvat") {
            aug = gvat(u, f, cfg.eps_gvat);
        } else if (which == "gccb") {
            aug = gccb(u, f, cfg.m_ccb, cfg.mag_cont, cfg.mag_bri);
        } else if (which == "groi") {
            aug = groi(u, roi_partition(f, cfg.m_roi, cfg.lambda_rate), cfg.m_roi, cfg.zeta_groi);
        } else {
            std::cerr << "unknown augmentation '" << which << "'\n";
            return 1;
        }
        const std::string stem = which + "_" + std::to_string(i);
        write_ppm((fs::path(out_dir) / ("input_" + std::to_string(i) + ".ppm")).string(), u);
        write_ppm((fs::path(out_dir) / (stem + ".ppm")).string(), aug);

        const int k = probs.shape[1];
        ProbDist row(probs.data.begin() + static_cast<std::ptrdiff_t>(i) * k,
                     probs.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * k);
        nlohmann::json side;
        side["de"] = degenerated_entropy(row, cfg.a);
        side["d_rel"] = reliability(row, ReliabilityKind::entropy);
        side["residual_mass"] = residual_mass(row, cfg.a);
        side["omega_low_size"] = omega_size;
        side["l1_norm"] = field.l1[static_cast<size_t>(i)];
        write_text((fs::path(out_dir) / (stem + ".json")).string(), side.dump(2) + "\n");
    }
    std::cout << "wrote " << count << " " << which << " images to " << out_dir << "\n";
    return 0;
}

int cmd_verify(std::uint64_t seed) {
    const verify::Report report = verify::run_all(seed);
    double total_ms = 0.0;
    for (const verify::CheckResult& c : report.checks) {
        std::printf("[%s] %-24s %s (%.0f ms)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str(),
                    c.millis);
        total_ms += c.millis;
    }
    std::printf("verification %s in %.1f s\n", report.all_pass() ? "passed" : "FAILED", total_ms / 1000.0);
    return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MixGDA semi-supervised training engine"};
    app.require_subcommand(1);

    std::string preset_name, config_path, out_override;
    std::uint64_t seed_override = 0;
    bool dry_run = false;

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--preset", preset_name, "named preset (see --list)");
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--out", out_override, "override the output directory");
    };

    CLI::App* train = app.add_subcommand("train", "run training and write checkpoints + metrics");
    add_config_flags(train);
    train->add_flag("--dry-run", dry_run, "validate and print the resolved config");
    bool list_presets = false;
    train->add_flag("--list", list_presets, "list preset names");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ckpt, data_path, format = "raw";
    eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_path, "dataset file(s), comma separated")->required();
    eval->add_option("--format", format, "cifar10 | cifar100 | raw");

    CLI::App* augment = app.add_subcommand("augment", "dump GDA images as PPM for inspection");
    std::string which = "gvat", aug_out = "aug_out";
    int count = 4;
    add_config_flags(augment);
    augment->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    augment->add_option("--data", data_path, "dataset file(s), comma separated")->required();
    augment->add_option("--format", format, "cifar10 | cifar100 | raw");
    augment->add_option("--which", which, "gvat | gccb | groi");
    augment->add_option("--count", count, "number of images to process");
    augment->add_option("--aug-out", aug_out, "output directory for images");

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the invariant and oracle suites");
    std::uint64_t verify_seed = 1;
    verify_cmd->add_option("--seed", verify_seed, "suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        const bool has_seed = app.count_all() && (train->count("--seed") || augment->count("--seed"));
        if (train->parsed()) {
            if (list_presets) {
                for (const std::string& n : preset_names()) std::cout << n << "\n";
                return 0;
            }
            return cmd_train(resolve_config(preset_name, config_path, seed_override, has_seed, out_override),
                             dry_run);
        }
        if (eval->parsed()) return cmd_eval(ckpt, data_path, format);
        if (augment->parsed())
            return cmd_augment(resolve_config(preset_name, config_path, seed_override, has_seed, out_override),
                               ckpt, data_path, format, which, count, aug_out);
        if (verify_cmd->parsed()) return cmd_verify(verify_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
