#include "mixgda/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace mixgda {

namespace {

ProbDist row_of(const Tensor& m, int i) {
    const int k = m.shape[1];
    return ProbDist(m.data.begin() + static_cast<std::ptrdiff_t>(i) * k,
                    m.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * k);
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
    const int n = static_cast<int>(rows.size());
    const int k = static_cast<int>(rows[0].size());
    Tensor t = Tensor::zeros({n, k});
    for (int i = 0; i < n; ++i)
        std::copy(rows[static_cast<size_t>(i)].begin(), rows[static_cast<size_t>(i)].end(),
                  t.data.begin() + static_cast<std::ptrdiff_t>(i) * k);
    return t;
}

/// -(1/m) * sum(targets . log g)
NodeId ce_term(Graph& g, NodeId probs, const Tensor& targets, int m_norm) {
    NodeId lg = g.log_clamped(probs);
    return g.scale(g.sum(g.mul(g.constant(targets), lg)), -1.0 / m_norm);
}

/// (1/m) * sum_i w_i * KL(y_i || g_i) over full K-dim soft targets.
NodeId weighted_kl_term(Graph& g, NodeId probs, const Tensor& targets, const std::vector<double>& weights,
                        int m_norm) {
    const int n = targets.shape[0], k = targets.shape[1];
    Tensor coeff = Tensor::zeros({n, k});
    double const_part = 0.0;  // (1/m) sum_i w_i * sum_k y log y
    for (int i = 0; i < n; ++i) {
        double h = 0.0;
        for (int c = 0; c < k; ++c) {
            const double y = targets.at2(i, c);
            coeff.at2(i, c) = weights[static_cast<size_t>(i)] * y;
            if (y > 0.0) h += y * std::log(y);
        }
        const_part += weights[static_cast<size_t>(i)] * h;
    }
    const_part /= m_norm;
    NodeId live = g.scale(g.sum(g.mul(g.constant(coeff), g.log_clamped(probs))), -1.0 / m_norm);
    return g.add(g.constant(Tensor::scalar(const_part)), live);
}

/// (1/m) * sum_i w_i * KL between degenerated (K+1)-vectors: the frozen
/// [mask.g_old ; rem_old] against the live [mask.g ; 1 - <mask,g>].
NodeId degenerated_kl_term(Graph& g, NodeId probs, const Tensor& mask, const Tensor& probs_old,
                           const std::vector<double>& rem_old, const std::vector<double>& weights,
                           int m_norm) {
    const int n = mask.shape[0], k = mask.shape[1];
    Tensor coeff = Tensor::zeros({n, k});
    std::vector<double> coeff_res(static_cast<size_t>(n), 0.0);
    double const_part = 0.0;  // -(1/m) sum_i w_i H(p_i)
    for (int i = 0; i < n; ++i) {
        double h = 0.0;
        for (int c = 0; c < k; ++c) {
            const double p = mask.at2(i, c) * probs_old.at2(i, c);
            coeff.at2(i, c) = weights[static_cast<size_t>(i)] * p;
            if (p > 0.0) h -= p * std::log(p);
        }
        const double pr = rem_old[static_cast<size_t>(i)];
        if (pr > 0.0) h -= pr * std::log(pr);
        coeff_res[static_cast<size_t>(i)] = weights[static_cast<size_t>(i)] * pr;
        const_part -= weights[static_cast<size_t>(i)] * h;
    }
    const_part /= m_norm;

    NodeId lg = g.log_clamped(probs);
    NodeId t1 = g.sum(g.mul(g.constant(coeff), lg));
    NodeId residual = g.sub(g.constant(Tensor::full({n}, 1.0)), g.row_sum(g.mul(g.constant(mask), probs)));
    NodeId t2 = g.sum(g.mul(g.constant(Tensor({n}, std::move(coeff_res))), g.log_clamped(residual)));
    NodeId live = g.scale(g.add(t1, t2), -1.0 / m_norm);
    return g.add(g.constant(Tensor::scalar(const_part)), live);
}

/// (1/m) * sum_i w_i * (1 - <mask_i, g_i>)
NodeId rem_term(Graph& g, NodeId probs, const Tensor& mask, const std::vector<double>& weights, int m_norm) {
    const int n = mask.shape[0], k = mask.shape[1];
    Tensor coeff = Tensor::zeros({n, k});
    double const_part = 0.0;
    for (int i = 0; i < n; ++i) {
        const_part += weights[static_cast<size_t>(i)];
        for (int c = 0; c < k; ++c) coeff.at2(i, c) = weights[static_cast<size_t>(i)] * mask.at2(i, c);
    }
    const_part /= m_norm;
    NodeId live = g.scale(g.sum(g.mul(g.constant(coeff), probs)), -1.0 / m_norm);
    return g.add(g.constant(Tensor::scalar(const_part)), live);
}

/// (1/m_ul) * sum over confident v of <g_v, d_v> + 1 - <g_v, s_v>, as
/// |confident|/m_ul + (1/m_ul) * sum((D - S) . g) with zero rows elsewhere.
NodeId inner_term(Graph& g, NodeId probs, const PartnerAssignment& partners, int m_ul, int k) {
    Tensor diff_minus_same = Tensor::zeros({m_ul, k});
    for (size_t m = 0; m < partners.confident.size(); ++m) {
        const int row = partners.confident[m];
        for (int c = 0; c < k; ++c)
            diff_minus_same.at2(row, c) = partners.diff_dist[m][static_cast<size_t>(c)] -
                                          partners.same_dist[m][static_cast<size_t>(c)];
    }
    const double const_part = static_cast<double>(partners.confident.size()) / m_ul;
    NodeId live = g.scale(g.sum(g.mul(g.constant(diff_minus_same), probs)), 1.0 / m_ul);
    return g.add(g.constant(Tensor::scalar(const_part)), live);
}

}  // namespace

FrozenStep prepare_step(const Minibatch& mb, NetworkState& net, const HyperParams& hp, Rng& rng) {
    FrozenStep fs;
    fs.m_l = static_cast<int>(mb.labeled.size());
    fs.m_ul = static_cast<int>(mb.unlabeled.size());
    fs.k = hp.num_classes;
    if (fs.m_l == 0 || fs.m_ul == 0) throw std::invalid_argument("prepare_step: empty minibatch");
    if (fs.m_l > fs.m_ul)
        throw std::invalid_argument("prepare_step: m_L " + std::to_string(fs.m_l) + " exceeds m_UL " +
                                    std::to_string(fs.m_ul));

    const bool need_field = hp.delta_gvat > 0.0 || hp.rho_gccb > 0.0 || hp.rho_groi > 0.0;
    const bool inner_possible = hp.beta_inner <= 1.0;
    fs.has_u_pass = hp.rho_groi > 0.0 || inner_possible;
    fs.has_gvat = hp.delta_gvat > 0.0;
    fs.has_gccb = hp.rho_gccb > 0.0;
    fs.has_groi = hp.rho_groi > 0.0;
    fs.has_xu = hp.delta_xu > 0.0;
    const bool need_frozen_u = need_field || fs.has_xu || inner_possible;

    // supervised mix first; rng order is part of the determinism contract
    std::vector<MixedSample> mixed = hp.use_self_mixup
                                         ? self_mixup(mb.labeled, fs.k, hp.alpha, rng)
                                         : mixup_supervised(mb.labeled, fs.k, hp.alpha, rng);
    {
        std::vector<Tensor> imgs;
        std::vector<std::vector<double>> tgts;
        for (MixedSample& m : mixed) {
            imgs.push_back(m.image);
            tgts.push_back(m.target);
        }
        fs.xx_images = stack_images(imgs);
        fs.xx_targets = rows_to_tensor(tgts);
    }

    std::vector<Tensor> u_imgs;
    for (const UnlabeledDraw& d : mb.unlabeled) u_imgs.push_back(d.augmented);
    fs.u_images = stack_images(u_imgs);

    if (need_frozen_u) {
        GdaForwardOptions gopts;
        gopts.use_batch_stats = hp.gda_batch_stats;
        GradField field;
        if (need_field) {
            field = grad_field(net, fs.u_images, hp.a, gopts, &fs.u_probs_old);
        } else {
            Graph g;
            BoundNet bound(g, net, false);
            ForwardOptions fwd;
            fwd.use_batch_stats = gopts.use_batch_stats;
            fs.u_probs_old = g.value(bound.run(fs.u_images, fwd).probs);
        }
        fs.u_mask = Tensor::zeros({fs.m_ul, fs.k});
        fs.d_rel_u.resize(static_cast<size_t>(fs.m_ul));
        fs.rem_old.resize(static_cast<size_t>(fs.m_ul));
        for (int i = 0; i < fs.m_ul; ++i) {
            const ProbDist row = row_of(fs.u_probs_old, i);
            const PPIMask m = ppi(row, hp.a);
            for (int c = 0; c < fs.k; ++c) fs.u_mask.at2(i, c) = m.indicator[static_cast<size_t>(c)];
            fs.d_rel_u[static_cast<size_t>(i)] = reliability(row, hp.rel_kind);
            fs.rem_old[static_cast<size_t>(i)] = residual_mass(row, m);
        }

        if (fs.has_gvat) fs.gvat_images = gvat_batch(fs.u_images, field, hp.eps_gvat);
        if (fs.has_gccb) fs.gccb_images = gccb_batch(fs.u_images, field, hp.m_ccb, hp.mag_cont, hp.mag_bri);
        if (fs.has_groi) {
            Tensor groi_imgs =
                groi_batch(fs.u_images, field, hp.m_roi, hp.lambda_rate, hp.zeta_groi, &fs.roi_empty);

            // frozen forward on the supervised mixed images for d_rel^(label)
            Graph g;
            BoundNet bound(g, net, false);
            ForwardOptions fwd;
            fwd.use_batch_stats = gopts.use_batch_stats;
            const Tensor xx_probs = g.value(bound.run(fs.xx_images, fwd).probs);
            fs.d_rel_label.resize(static_cast<size_t>(fs.m_l));
            const ReliabilityKind kind = hp.use_self_mixup ? hp.label_rel_kind : ReliabilityKind::cosine;
            for (int i = 0; i < fs.m_l; ++i)
                fs.d_rel_label[static_cast<size_t>(i)] =
                    reliability_pair(row_of(fs.xx_targets, i), row_of(xx_probs, i), kind);

            std::vector<Tensor> gi;
            std::vector<std::vector<double>> fake;
            for (int i = 0; i < fs.m_ul; ++i) {
                gi.push_back(slice_image(groi_imgs, i));
                fake.push_back(row_of(fs.u_probs_old, i));
            }
            std::vector<MixedSample> gm = groi_mix(gi, fake, mixed, hp.zeta_groi);
            std::vector<Tensor> imgs;
            std::vector<std::vector<double>> tgts;
            for (MixedSample& m : gm) {
                imgs.push_back(m.image);
                tgts.push_back(m.target);
            }
            fs.groi_images = stack_images(imgs);
            fs.groi_targets = rows_to_tensor(tgts);
        }

        if (fs.has_xu) {
            std::vector<Tensor> first_u;
            std::vector<std::vector<double>> first_probs;
            for (int i = 0; i < fs.m_l; ++i) {
                first_u.push_back(slice_image(fs.u_images, i));
                first_probs.push_back(row_of(fs.u_probs_old, i));
            }
            std::vector<MixedSample> cm = collab_mix(mb.labeled, first_u, first_probs, fs.k, hp.a, hp.zeta_xu);
            std::vector<Tensor> imgs;
            std::vector<std::vector<double>> tgts;
            for (MixedSample& m : cm) {
                imgs.push_back(m.image);
                tgts.push_back(m.target);
            }
            fs.xu_images = stack_images(imgs);
            fs.xu_targets = rows_to_tensor(tgts);
        }

        if (inner_possible) {
            std::vector<ProbDist> rows;
            rows.reserve(static_cast<size_t>(fs.m_ul));
            for (int i = 0; i < fs.m_ul; ++i) rows.push_back(row_of(fs.u_probs_old, i));
            fs.partners = assign_partners(rows, hp.beta_inner, rng);
        }
    }
    return fs;
}

LossBreakdown eval_live(const FrozenStep& fs, NetworkState& net, const HyperParams& hp,
                        const LiveOptions& opts, std::vector<double>* grad_out) {
    Graph g;
    BoundNet bound(g, net, opts.want_grad);
    ForwardOptions fwd;
    fwd.use_batch_stats = true;
    fwd.update_running = opts.update_bn;
    fwd.dropout_enabled = opts.dropout_enabled;
    fwd.dropout_seed = opts.dropout_seed;

    LossBreakdown bd;
    // total assembled in the same op order as the scalar formula below so the
    // breakdown identity holds bit-for-bit
    NodeId ce_xx = ce_term(g, bound.run(fs.xx_images, fwd).probs, fs.xx_targets, fs.m_l);
    bd.ce_xx = g.value(ce_xx).data[0];
    NodeId total = ce_xx;
    double total_v = bd.ce_xx;

    if (fs.has_gvat) {
        NodeId t = degenerated_kl_term(g, bound.run(fs.gvat_images, fwd).probs, fs.u_mask, fs.u_probs_old,
                                       fs.rem_old, fs.d_rel_u, fs.m_ul);
        bd.gvat = g.value(t).data[0];
        total = g.add(total, g.scale(t, hp.delta_gvat));
        total_v = total_v + hp.delta_gvat * bd.gvat;
    }
    if (fs.has_gccb) {
        NodeId t = degenerated_kl_term(g, bound.run(fs.gccb_images, fwd).probs, fs.u_mask, fs.u_probs_old,
                                       fs.rem_old, fs.d_rel_u, fs.m_ul);
        bd.gccb = g.value(t).data[0];
        total = g.add(total, g.scale(t, hp.rho_gccb));
        total_v = total_v + hp.rho_gccb * bd.gccb;
    }

    NodeId u_probs = kNoNode;
    if (fs.has_groi || !fs.partners.confident.empty()) u_probs = bound.run(fs.u_images, fwd).probs;

    if (fs.has_groi) {
        std::vector<double> w(static_cast<size_t>(fs.m_ul));
        for (int i = 0; i < fs.m_ul; ++i)
            w[static_cast<size_t>(i)] =
                0.5 * (fs.d_rel_u[static_cast<size_t>(i)] + fs.d_rel_label[static_cast<size_t>(i % fs.m_l)]);
        NodeId t_groi = weighted_kl_term(g, bound.run(fs.groi_images, fwd).probs, fs.groi_targets, w, fs.m_ul);
        NodeId t_rem = rem_term(g, u_probs, fs.u_mask, fs.d_rel_u, fs.m_ul);
        bd.groi = g.value(t_groi).data[0];
        bd.rem = g.value(t_rem).data[0];
        total = g.add(total, g.scale(g.add(t_groi, t_rem), hp.rho_groi));
        total_v = total_v + hp.rho_groi * (bd.groi + bd.rem);
    }
    if (fs.has_xu) {
        NodeId t = ce_term(g, bound.run(fs.xu_images, fwd).probs, fs.xu_targets, fs.m_l);
        bd.ce_xu = g.value(t).data[0];
        total = g.add(total, g.scale(t, hp.delta_xu));
        total_v = total_v + hp.delta_xu * bd.ce_xu;
    }
    if (!fs.partners.confident.empty()) {
        NodeId t = inner_term(g, u_probs, fs.partners, fs.m_ul, fs.k);
        bd.inner = g.value(t).data[0];
        total = g.add(total, t);
        total_v = total_v + bd.inner;
    }
    bd.total = total_v;

    if (opts.want_grad) {
        g.backward(total);
        if (grad_out) *grad_out = bound.theta_grad();
    }
    return bd;
}

LossBreakdown total_loss(const Minibatch& mb, NetworkState& net, const HyperParams& hp, Rng& rng,
                         const LiveOptions& opts, std::vector<double>* grad_out, FrozenStep* frozen_out) {
    FrozenStep fs = prepare_step(mb, net, hp, rng);
    LossBreakdown bd = eval_live(fs, net, hp, opts, grad_out);
    if (frozen_out) *frozen_out = std::move(fs);
    return bd;
}

}  // namespace mixgda
