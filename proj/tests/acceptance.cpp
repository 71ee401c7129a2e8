// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Oracles are independent re-implementations (finite differences,
// exhaustive enumeration, closed forms); tolerances are pinned in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mixgda/driver.hpp"
#include "mixgda/objective.hpp"
#include "mixgda/verify.hpp"

using namespace mixgda;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Setup {
    NetworkState net;
    Minibatch mb;
};

Setup make_setup(std::uint64_t seed, int m_l, int m_ul) {
    NetworkConfig cfg;
    cfg.arch = Arch::tiny;
    cfg.num_classes = 3;
    cfg.image_side = 8;
    cfg.image_channels = 3;
    Setup s{NetworkState::build(cfg, seed), {}};
    SyntheticSpec spec;
    spec.n = 48;
    spec.num_classes = 3;
    spec.side = 8;
    spec.seed = seed * 31 + 7;
    const auto pool = make_synthetic(spec);
    SplitPools pools = split(pool, 24, 3, seed * 17 + 3);
    MinibatchSampler sampler(pools, false, 2, seed * 13 + 1);
    s.mb = sampler.next(m_l, m_ul);
    return s;
}

HyperParams base_hp() {
    HyperParams hp;
    hp.num_classes = 3;
    hp.a = 0.4;
    hp.alpha = 0.3;
    hp.use_self_mixup = true;
    hp.delta_gvat = 0.0;
    hp.eps_gvat = 1.0;
    hp.rho_gccb = 0.0;
    hp.m_ccb = 4;
    hp.rho_groi = 0.0;
    hp.m_roi = 2;
    hp.delta_xu = 0.0;
    hp.beta_inner = 1.1;
    return hp;
}

/// Directional + coordinate finite differences of the live loss against the
/// autodiff gradient, at frozen targets. Returns the worst relative error.
double fd_vs_autodiff(Setup& s, const HyperParams& hp, std::uint64_t seed, int n_dirs, int n_coords) {
    Rng rng(seed);
    FrozenStep fs = prepare_step(s.mb, s.net, hp, rng);

    LiveOptions opts;
    opts.want_grad = true;
    opts.dropout_enabled = true;
    opts.dropout_seed = seed ^ 0xD120;
    std::vector<double> grad;
    eval_live(fs, s.net, hp, opts, &grad);

    const std::vector<double> theta0 = s.net.snapshot();
    auto loss_at = [&](const std::vector<double>& theta) {
        s.net.load(theta);
        LiveOptions o = opts;
        o.want_grad = false;
        return eval_live(fs, s.net, hp, o, nullptr).total;
    };

    const double h = 1e-5;
    double worst = 0.0;
    Rng dir_rng(seed ^ 0xD14);
    for (int d = 0; d < n_dirs; ++d) {
        std::vector<double> dir(theta0.size());
        double norm = 0.0;
        for (double& v : dir) {
            v = dir_rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        std::vector<double> plus = theta0, minus = theta0;
        double ad = 0.0;
        for (size_t i = 0; i < theta0.size(); ++i) {
            const double step = h * dir[i] / norm;
            plus[i] += step;
            minus[i] -= step;
            ad += grad[i] * dir[i] / norm;
        }
        const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
        worst = std::max(worst, std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8}));
    }
    // random single coordinates, compared jointly by norm
    std::vector<double> ad_c, fd_c;
    for (int c = 0; c < n_coords; ++c) {
        const size_t idx = static_cast<size_t>(dir_rng.uniform_int(theta0.size()));
        std::vector<double> plus = theta0, minus = theta0;
        plus[idx] += h;
        minus[idx] -= h;
        fd_c.push_back((loss_at(plus) - loss_at(minus)) / (2.0 * h));
        ad_c.push_back(grad[idx]);
    }
    if (n_coords > 0) worst = std::max(worst, verify::rel_error(ad_c, fd_c, 1e-8));
    s.net.load(theta0);
    return worst;
}

void criterion_1() {
    const auto t0 = Clock::now();
    struct TermConfig {
        const char* name;
        void (*enable)(HyperParams&);
    };
    const std::vector<TermConfig> terms = {
        {"ce_xx", [](HyperParams&) {}},
        {"gvat", [](HyperParams& hp) { hp.delta_gvat = 1.0; }},
        {"gccb", [](HyperParams& hp) { hp.rho_gccb = 1.0; }},
        {"groi+rem", [](HyperParams& hp) { hp.rho_groi = 1.0; }},
        {"ce_xu", [](HyperParams& hp) { hp.delta_xu = 1.0; }},
        {"inner", [](HyperParams& hp) { hp.beta_inner = 0.5; }},
    };
    double worst = 0.0;
    std::string worst_term = "none";
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Setup s = make_setup(seed, 3, 5);
        for (const TermConfig& term : terms) {
            HyperParams hp = base_hp();
            term.enable(hp);
            const double err = fd_vs_autodiff(s, hp, seed, 2, 6);
            if (err > worst) {
                worst = err;
                worst_term = term.name;
            }
        }
    }
    const double elapsed = seconds_since(t0);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "autodiff vs finite differences, 50 seeds x 6 loss terms: worst rel err %.3g (%s), "
                  "%.1f s (limit 120 s)",
                  worst, worst_term.c_str(), elapsed);
    report(1, worst < 1e-4 && elapsed < 120.0, buf);
}

void criterion_2() {
    const ProbDist g = {0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.04, 0.1, 0.3, 0.5};
    const double de = degenerated_entropy(g, 0.3);
    const double expect = -0.5 * std::log(0.5) - 0.3 * std::log(0.3) - 0.2 * std::log(0.2);
    const double rem = residual_mass(g, 0.3);
    const bool pass = std::abs(de - expect) <= 1e-9 && rem == 0.2;
    char buf[160];
    std::snprintf(buf, sizeof buf, "worked example: DE=%.12f (expect %.12f), g_rem=%.17g (exact 0.2)", de,
                  expect, rem);
    report(2, pass, buf);
}

void criterion_3() {
    const auto res = verify::check_reliability_bounds(2026, 10000, {2, 10, 100});
    report(3, res.pass,
           "reliability bound inequalities, 10000 Dirichlet pairs for K in {2,10,100}: " + res.detail);
}

void criterion_4() {
    const auto res = verify::check_gccb_signs(2026, 50);
    report(4, res.pass, "gCCB sign rule vs 64-assignment enumeration: " + res.detail);
}

void criterion_5() {
    const auto res = verify::check_omega_low(2026, 200);
    report(5, res.pass, "omega_low prefix vs independent enumeration: " + res.detail);
}

void criterion_6() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 60; seed < 63; ++seed) {
        Setup s = make_setup(seed, 3, 5);
        HyperParams hp = base_hp();
        hp.delta_gvat = 1.0;
        hp.rho_gccb = 1.2;
        hp.rho_groi = 0.9;
        hp.delta_xu = 1.0;
        hp.beta_inner = 0.5;  // every term live
        worst = std::max(worst, fd_vs_autodiff(s, hp, seed, 6, 12));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "frozen-target gradient, all loss terms enabled: worst rel err %.3g (%.1f s)", worst,
                  seconds_since(t0));
    report(6, worst < 1e-4, buf);
}

void criterion_7() {
    RunConfig cfg = preset("synth-mini");
    cfg.n_cycle = 4;
    cfg.n_decay = 1;
    cfg.steps_per_cycle = 3;
    TrainData data = prepare_data(cfg);
    NetworkState net = NetworkState::build(cfg.network_config(), derive_seed(cfg.seed, 0x11));
    TrainOptions topts;
    topts.record_snapshots = true;
    TrainResult result =
        run_training(data.pools, net, cfg.hyper_params(), cfg.schedule(), cfg.batch_options(), cfg.seed, topts);

    bool pass = result.snapshots.size() == static_cast<size_t>(cfg.n_cycle - cfg.n_decay + 1);
    double worst = 0.0;
    for (size_t i = 0; i < result.averaged.mean.size() && pass; ++i) {
        double offline = 0.0;
        for (const auto& snap : result.snapshots) offline += snap[i];
        offline /= static_cast<double>(result.snapshots.size());
        const double err = std::abs(result.averaged.mean[i] - offline) / std::max(1.0, std::abs(offline));
        worst = std::max(worst, err);
    }
    pass = pass && worst <= 1e-12;
    char buf[160];
    std::snprintf(buf, sizeof buf, "averaged model vs offline mean of %zu snapshots: max rel diff %.3g",
                  result.snapshots.size(), worst);
    report(7, pass, buf);
}

void criterion_8() {
    const auto t0 = Clock::now();
    int wins = 0;
    std::string detail = "averaged-model test error, MixGDA vs supervised-only:";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RunConfig full = preset("synth-smoke");
        full.seed = seed;
        RunConfig sup = preset("synth-supervised");
        sup.seed = seed;
        const RunOutcome mix_out = run_config(full);
        const RunOutcome sup_out = run_config(sup);
        const bool win = mix_out.error_averaged <= sup_out.error_averaged;
        if (win) ++wins;
        char buf[80];
        std::snprintf(buf, sizeof buf, " seed %llu: %.3f vs %.3f%s", static_cast<unsigned long long>(seed),
                      mix_out.error_averaged, sup_out.error_averaged, win ? "" : " (loss)");
        detail += buf;
        std::printf("  criterion 8 progress:%s\n", buf);
        std::fflush(stdout);
    }
    const double elapsed = seconds_since(t0);
    char buf[120];
    std::snprintf(buf, sizeof buf, " -> %d/5 seeds improved, %.0f s (limit 900 s)", wins, elapsed);
    detail += buf;
    report(8, wins >= 4 && elapsed < 900.0, detail);
}

void criterion_9() {
    const RunConfig cfg = preset("synth-mini");
    const RunOutcome a = run_config(cfg);
    const RunOutcome b = run_config(cfg);
    const bool pass = a.result.metrics_csv == b.result.metrics_csv &&
                      a.result.prime_theta == b.result.prime_theta &&
                      a.averaged_net.snapshot() == b.averaged_net.snapshot();
    report(9, pass,
           pass ? "two executions of the synth-mini preset produce byte-identical metrics and weights"
                : "repeat execution diverged");
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    std::printf("%d of 9 criteria passed in %.0f s\n", 9 - g_failures, seconds_since(t0));
    return g_failures;
}
