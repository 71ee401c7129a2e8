#include "mixgda/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mixgda {

void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (theta.size() != grad.size() || theta.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < theta.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double Schedule::lr_at(int nc) const {
    if (nc <= n_decay) return lr0;
    return lr0 * static_cast<double>(n_cycle - nc) / static_cast<double>(n_cycle - n_decay);
}

void AveragedModel::add(const std::vector<double>& theta) {
    if (count == 0) {
        mean = theta;
        count = 1;
        return;
    }
    if (theta.size() != mean.size()) throw std::invalid_argument("AveragedModel: size mismatch");
    count += 1;
    const double w = 1.0 / static_cast<double>(count);
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += (theta[i] - mean[i]) * w;
}

namespace {

void append_num(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace

TrainResult run_training(const SplitPools& pools, NetworkState& net, const HyperParams& hp,
                         const Schedule& sched, const BatchOptions& batch, std::uint64_t seed,
                         const TrainOptions& opts) {
    MinibatchSampler sampler(pools, batch.flip_enabled, batch.max_shift, derive_seed(seed, 0x01));
    Rng step_rng(derive_seed(seed, 0x02));
    std::vector<double> theta = net.snapshot();
    AdamState adam(theta.size());

    TrainResult result;
    result.metrics_csv = "cycle,lr,ce_xx,gvat,groi,rem,gccb,ce_xu,inner,total,roi_empty,eval_error\n";
    net.set_mode(NetMode::train);

    long global_step = 0;
    try {
        for (int nc = 0; nc < sched.n_cycle; ++nc) {
            const double lr = sched.lr_at(nc);
            const double beta1 = sched.beta1_at(nc);
            LossBreakdown sums;
            long roi_empty_cycle = 0;
            for (int s = 0; s < sched.steps_per_cycle; ++s, ++global_step) {
                Minibatch mb = sampler.next(batch.m_labeled, batch.m_unlabeled);
                LiveOptions lo;
                lo.update_bn = true;
                lo.dropout_enabled = true;
                lo.dropout_seed = derive_seed(seed, 0x57E90000ULL + static_cast<std::uint64_t>(global_step));
                lo.want_grad = true;
                std::vector<double> grad;
                FrozenStep frozen;
                LossBreakdown bd = total_loss(mb, net, hp, step_rng, lo, &grad, &frozen);
                adam_step(theta, grad, adam, lr, beta1, Schedule::beta2);
                net.load(theta);

                sums.ce_xx += bd.ce_xx;
                sums.gvat += bd.gvat;
                sums.groi += bd.groi;
                sums.rem += bd.rem;
                sums.gccb += bd.gccb;
                sums.ce_xu += bd.ce_xu;
                sums.inner += bd.inner;
                sums.total += bd.total;
                roi_empty_cycle += frozen.roi_empty;
            }
            if (nc + 1 >= sched.n_decay) {
                result.averaged.add(theta);
                if (opts.record_snapshots) result.snapshots.push_back(theta);
            }
            result.roi_empty_total += roi_empty_cycle;

            const double inv = 1.0 / sched.steps_per_cycle;
            std::string& csv = result.metrics_csv;
            csv += std::to_string(nc);
            csv += ',';
            append_num(csv, lr);
            for (double v : {sums.ce_xx, sums.gvat, sums.groi, sums.rem, sums.gccb, sums.ce_xu, sums.inner,
                             sums.total}) {
                csv += ',';
                append_num(csv, v * inv);
            }
            csv += ',';
            csv += std::to_string(roi_empty_cycle);
            csv += ',';
            if (opts.eval_every_cycles > 0 && opts.eval_set && (nc + 1) % opts.eval_every_cycles == 0)
                append_num(csv, net.evaluate(*opts.eval_set));
            csv += '\n';
        }
    } catch (...) {
        if (!opts.interrupt_checkpoint_path.empty()) {
            net.load(theta);
            net.save_checkpoint(opts.interrupt_checkpoint_path);
        }
        throw;
    }

    result.prime_theta = theta;
    return result;
}

void finalize(const AveragedModel& averaged, NetworkState& net, const std::vector<Sample>& labeled,
              Rng& rng) {
    if (averaged.count == 0) throw std::invalid_argument("finalize: averaged model holds no snapshots");
    net.load(averaged.mean);
    net.recalibrate_bn(labeled, rng);
    net.set_mode(NetMode::eval);
}

}  // namespace mixgda
