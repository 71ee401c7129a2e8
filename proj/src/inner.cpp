#include "mixgda/inner.hpp"

#include <stdexcept>

namespace mixgda {

PartnerAssignment assign_partners(const std::vector<ProbDist>& probs, double beta, Rng& rng) {
    PartnerAssignment out;
    const double beta_sq = beta * beta;
    for (size_t i = 0; i < probs.size(); ++i) {
        double sq = 0.0;
        for (double v : probs[i]) sq += v * v;
        if (sq >= beta_sq) out.confident.push_back(static_cast<int>(i));
    }
    const int n = static_cast<int>(out.confident.size());
    if (n == 0) return out;
    const size_t k = probs[0].size();

    for (int m = 0; m < n; ++m) {
        const ProbDist& gv = probs[static_cast<size_t>(out.confident[static_cast<size_t>(m)])];
        // independent random scan order per member; the member itself stays
        // in the list, so a self match as u_same is possible
        const std::vector<int> order = rng.permutation(n);
        const ProbDist* same = nullptr;
        const ProbDist* diff = nullptr;
        for (int pos = 0; pos < n && (!same || !diff); ++pos) {
            const ProbDist& gw = probs[static_cast<size_t>(out.confident[static_cast<size_t>(order[static_cast<size_t>(pos)])])];
            const double c = cosine(gv, gw);
            if (!same && c >= kCosSame) same = &gw;
            if (!diff && c <= kCosDiff) diff = &gw;
        }
        out.same_defaulted.push_back(same == nullptr);
        out.diff_defaulted.push_back(diff == nullptr);
        out.same_dist.push_back(same ? *same : std::vector<double>(k, 1.0));
        out.diff_dist.push_back(diff ? *diff : std::vector<double>(k, 0.0));
    }
    return out;
}

double inner_loss(const std::vector<ProbDist>& probs_new, const PartnerAssignment& assignment, int m_ul) {
    if (m_ul <= 0) throw std::invalid_argument("inner_loss: m_ul must be positive");
    double total = 0.0;
    for (size_t m = 0; m < assignment.confident.size(); ++m) {
        const ProbDist& gv = probs_new[static_cast<size_t>(assignment.confident[m])];
        total += inner_product(gv, assignment.diff_dist[m]);
        total += 1.0 - inner_product(gv, assignment.same_dist[m]);
    }
    return total / static_cast<double>(m_ul);
}

}  // namespace mixgda
