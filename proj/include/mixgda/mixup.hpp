#pragma once

#include <string>
#include <vector>

#include "mixgda/dataset.hpp"
#include "mixgda/prob.hpp"
#include "mixgda/rng.hpp"
#include "mixgda/tensor.hpp"

namespace mixgda {

enum class MixKind { supervised_mixup, self_mixup, groi_mix, collab_mix };

struct MixedSample {
    Tensor image;
    std::vector<double> target;  // soft label, sums to 1
    double lambda_used = 0.0;
    MixKind origin = MixKind::supervised_mixup;
};

/// Symmetric Beta(alpha, alpha) sampler.
class BetaSampler {
public:
    BetaSampler(double alpha, Rng& rng) : alpha_(alpha), rng_(&rng) {
        if (alpha <= 0.0) throw std::invalid_argument("BetaSampler: alpha must be positive");
    }
    double sample() { return rng_->beta(alpha_, alpha_); }

private:
    double alpha_;
    Rng* rng_;
};

std::vector<double> one_hot(int label, int num_classes);

/// Normal mixup over a labeled batch: per-sample lambda ~ Beta(alpha,alpha),
/// partners taken from one random permutation of the batch.
std::vector<MixedSample> mixup_supervised(const std::vector<LabeledDraw>& batch, int num_classes,
                                          double alpha, Rng& rng);

/// Self-mixup: each augmented sample mixed with its own original, lambda
/// forced to max(lambda, 1-lambda); target stays one-hot.
std::vector<MixedSample> self_mixup(const std::vector<LabeledDraw>& batch, int num_classes, double alpha,
                                    Rng& rng);

/// gROI(u_i) mixed toward x_{((i-1) mod m_L)+1}^(x+x) with fixed ratio zeta;
/// targets mix g(u_i) with the supervised mixed target the same way.
std::vector<MixedSample> groi_mix(const std::vector<Tensor>& groi_images,
                                  const std::vector<std::vector<double>>& fake_labels,
                                  const std::vector<MixedSample>& supervised, double zeta);

/// Equal-ratio mix of x_i with u_i (first m_L unlabeled, batch order); target
/// mixes label(x_i) with the sharpened ppd fake label.
std::vector<MixedSample> collab_mix(const std::vector<LabeledDraw>& labeled,
                                    const std::vector<Tensor>& unlabeled_images,
                                    const std::vector<std::vector<double>>& unlabeled_probs,
                                    int num_classes, double a, double zeta_xu);

}  // namespace mixgda
