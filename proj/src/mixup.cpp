#include "mixgda/mixup.hpp"

#include <algorithm>
#include <stdexcept>

namespace mixgda {

std::vector<double> one_hot(int label, int num_classes) {
    if (label < 0 || label >= num_classes)
        throw std::invalid_argument("one_hot: label " + std::to_string(label) + " out of range");
    std::vector<double> v(static_cast<size_t>(num_classes), 0.0);
    v[static_cast<size_t>(label)] = 1.0;
    return v;
}

namespace {

Tensor lerp_images(double lambda, const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros(a.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = lambda * a.data[i] + (1.0 - lambda) * b.data[i];
    return out;
}

std::vector<double> lerp_vecs(double lambda, const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    return out;
}

}  // namespace

std::vector<MixedSample> mixup_supervised(const std::vector<LabeledDraw>& batch, int num_classes,
                                          double alpha, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("mixup_supervised: empty batch");
    BetaSampler beta(alpha, rng);
    std::vector<double> lambdas(batch.size());
    for (double& l : lambdas) l = beta.sample();
    const std::vector<int> perm = rng.permutation(static_cast<int>(batch.size()));

    std::vector<MixedSample> out;
    out.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const LabeledDraw& a = batch[i];
        const LabeledDraw& b = batch[static_cast<size_t>(perm[i])];
        MixedSample m;
        m.origin = MixKind::supervised_mixup;
        m.lambda_used = lambdas[i];
        m.image = lerp_images(m.lambda_used, a.augmented, b.augmented);
        m.target = lerp_vecs(m.lambda_used, one_hot(a.label, num_classes), one_hot(b.label, num_classes));
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<MixedSample> self_mixup(const std::vector<LabeledDraw>& batch, int num_classes, double alpha,
                                    Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("self_mixup: empty batch");
    BetaSampler beta(alpha, rng);
    std::vector<MixedSample> out;
    out.reserve(batch.size());
    for (const LabeledDraw& d : batch) {
        if (d.original.numel() == 0) throw std::invalid_argument("self_mixup: draw is missing its original image");
        double lambda = beta.sample();
        lambda = std::max(lambda, 1.0 - lambda);
        MixedSample m;
        m.origin = MixKind::self_mixup;
        m.lambda_used = lambda;
        m.image = lerp_images(lambda, d.augmented, d.original);
        m.target = one_hot(d.label, num_classes);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<MixedSample> groi_mix(const std::vector<Tensor>& groi_images,
                                  const std::vector<std::vector<double>>& fake_labels,
                                  const std::vector<MixedSample>& supervised, double zeta) {
    if (supervised.empty()) throw std::invalid_argument("groi_mix: empty supervised batch");
    if (groi_images.size() != fake_labels.size())
        throw std::invalid_argument("groi_mix: image/label count mismatch");
    if (zeta <= 0.5 || zeta > 1.0) throw std::invalid_argument("groi_mix: zeta must be in (0.5, 1]");
    const size_t m_l = supervised.size();
    std::vector<MixedSample> out;
    out.reserve(groi_images.size());
    for (size_t i = 0; i < groi_images.size(); ++i) {
        const MixedSample& partner = supervised[i % m_l];  // cyclic pairing
        MixedSample m;
        m.origin = MixKind::groi_mix;
        m.lambda_used = zeta;
        m.image = lerp_images(zeta, groi_images[i], partner.image);
        m.target = lerp_vecs(zeta, fake_labels[i], partner.target);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<MixedSample> collab_mix(const std::vector<LabeledDraw>& labeled,
                                    const std::vector<Tensor>& unlabeled_images,
                                    const std::vector<std::vector<double>>& unlabeled_probs,
                                    int num_classes, double a, double zeta_xu) {
    if (unlabeled_images.size() < labeled.size())
        throw std::invalid_argument("collab_mix: needs at least m_L unlabeled samples, got " +
                                    std::to_string(unlabeled_images.size()));
    std::vector<MixedSample> out;
    out.reserve(labeled.size());
    for (size_t i = 0; i < labeled.size(); ++i) {
        MixedSample m;
        m.origin = MixKind::collab_mix;
        m.lambda_used = zeta_xu;
        m.image = lerp_images(zeta_xu, labeled[i].augmented, unlabeled_images[i]);
        m.target = lerp_vecs(zeta_xu, one_hot(labeled[i].label, num_classes), ppd(unlabeled_probs[i], a));
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace mixgda
