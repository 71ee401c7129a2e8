#pragma once

#include <vector>

#include "mixgda/prob.hpp"
#include "mixgda/rng.hpp"

namespace mixgda {

/// Partner choice for the aggregation/separation loss. For each confident
/// sample v: u_same is the first scanned confident member with
/// cos >= cos(pi/6), defaulting to the all-ones vector; u_diff the first with
/// cos <= cos(pi/3), defaulting to the zero vector. Partner distributions are
/// frozen copies of g(.;theta_k).
struct PartnerAssignment {
    std::vector<int> confident;                    // indices into the unlabeled batch
    std::vector<std::vector<double>> same_dist;    // per confident member
    std::vector<std::vector<double>> diff_dist;
    std::vector<bool> same_defaulted, diff_defaulted;
};

inline constexpr double kCosSame = 0.86602540378443864676;  // cos(pi/6)
inline constexpr double kCosDiff = 0.5;                      // cos(pi/3)

PartnerAssignment assign_partners(const std::vector<ProbDist>& probs, double beta, Rng& rng);

/// (1/m_ul) * sum over confident v of
/// <g_new(v), g_old(u_diff)> + (1 - <g_new(v), g_old(u_same)>).
double inner_loss(const std::vector<ProbDist>& probs_new, const PartnerAssignment& assignment, int m_ul);

}  // namespace mixgda
