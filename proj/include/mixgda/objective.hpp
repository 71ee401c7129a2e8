#pragma once

#include <cstdint>
#include <vector>

#include "mixgda/dataset.hpp"
#include "mixgda/gda.hpp"
#include "mixgda/inner.hpp"
#include "mixgda/mixup.hpp"
#include "mixgda/network.hpp"
#include "mixgda/prob.hpp"

namespace mixgda {

struct HyperParams {
    int num_classes = 10;
    double a = 0.5;  // PPI threshold ratio

    ReliabilityKind rel_kind = ReliabilityKind::entropy;        // d_rel for unlabeled terms
    ReliabilityKind label_rel_kind = ReliabilityKind::cosine;   // d_rel^(label) under Self-mixup
    bool use_self_mixup = true;
    double alpha = 0.1;

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

    double beta_inner = 0.8;  // > 1 disables the confident set entirely

    bool gda_batch_stats = true;  // target/gradient forwards: minibatch vs running stats
};

/// Unweighted per-term means plus the weighted sum
/// total = ce_xx + delta_gvat*gvat + rho_groi*(groi + rem) + rho_gccb*gccb
///       + delta_xu*ce_xu + inner.
/// Skipped terms (zero weight / empty confident set) report 0.
struct LossBreakdown {
    double ce_xx = 0.0;
    double gvat = 0.0;
    double groi = 0.0;
    double rem = 0.0;
    double gccb = 0.0;
    double ce_xu = 0.0;
    double inner = 0.0;
    double total = 0.0;
};

/// Everything evaluated at theta_k and held constant through the live pass:
/// mixed images and targets, GDA images, PPI masks, reliabilities, partner
/// distributions. Recomputed from scratch every step.
struct FrozenStep {
    int m_l = 0, m_ul = 0, k = 0;

    Tensor xx_images, xx_targets;          // supervised mix {m_l,...} / {m_l,K}
    Tensor u_images;                       // augmented unlabeled batch
    Tensor u_probs_old, u_mask;            // {m_ul,K}
    std::vector<double> d_rel_u;           // per unlabeled sample
    std::vector<double> rem_old;           // residual mass of the frozen prediction
    std::vector<double> d_rel_label;       // per supervised mixed sample

    Tensor gvat_images, gccb_images;
    Tensor groi_images, groi_targets;      // gROI-mix {m_ul,...} / {m_ul,K}
    Tensor xu_images, xu_targets;          // collaborative mix {m_l,...} / {m_l,K}

    PartnerAssignment partners;
    long roi_empty = 0;  // images whose omega_low covered every block

    bool has_gvat = false, has_gccb = false, has_groi = false, has_xu = false, has_u_pass = false;
};

/// Consumes rng in a fixed order: supervised mix draws, then partner scans.
FrozenStep prepare_step(const Minibatch& mb, NetworkState& net, const HyperParams& hp, Rng& rng);

struct LiveOptions {
    bool update_bn = false;          // EMA update of running statistics
    bool dropout_enabled = true;
    std::uint64_t dropout_seed = 0;  // per (run seed, step)
    bool want_grad = true;
};

/// Differentiable pass at the current weights. When want_grad, grad_out
/// receives d(total)/d(theta) in snapshot order.
LossBreakdown eval_live(const FrozenStep& frozen, NetworkState& net, const HyperParams& hp,
                        const LiveOptions& opts, std::vector<double>* grad_out);

/// prepare_step followed by eval_live at the same weights.
LossBreakdown total_loss(const Minibatch& mb, NetworkState& net, const HyperParams& hp, Rng& rng,
                         const LiveOptions& opts, std::vector<double>* grad_out,
                         FrozenStep* frozen_out = nullptr);

}  // namespace mixgda
