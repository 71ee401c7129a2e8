#pragma once

#include <functional>
#include <vector>

#include "mixgda/network.hpp"
#include "mixgda/prob.hpp"
#include "mixgda/tensor.hpp"

namespace mixgda {

/// Square block decomposition of a side x side image.
struct BlockGrid {
    int side = 0;
    int block = 0;  // M
    int per_row = 0;
    int count = 0;  // Q

    BlockGrid(int side_, int block_);
    int block_index(int i, int j) const { return (i / block) * per_row + (j / block); }
};

/// Input gradient of the degenerated entropy for a batch, plus per-image L1
/// norms. r3d has the batch shape {N,H,W,C}.
struct GradField {
    Tensor r3d;
    std::vector<double> l1;
};

struct GdaForwardOptions {
    /// Normalize with the current minibatch statistics (true) or the running
    /// statistics (false). Dropout stays off either way so the augmentations
    /// are deterministic functions of (u, theta, hyperparameters).
    bool use_batch_stats = true;
};

/// Builds a scalar graph node from the probability node of a frozen forward
/// pass (e.g. the summed degenerated entropy).
using ScalarBuilder = std::function<NodeId(Graph&, NodeId probs)>;

/// Gradient of scalar_fn(g(images)) with respect to the input pixels, with
/// the network weights frozen; neither the weights nor the images change.
Tensor input_gradient(NetworkState& net, const Tensor& images, const ScalarBuilder& scalar_fn,
                      const GdaForwardOptions& opts);

/// Frozen-weight forward + backward of sum_i DE(u_i) with the PPI masks held
/// at their current values; also returns the probabilities g(u_i).
GradField grad_field(NetworkState& net, const Tensor& images, double a, const GdaForwardOptions& opts,
                     Tensor* probs_out = nullptr);

/// u + eps * r / ||r||_1 per image; identity when ||r||_1 < 1e-12.
/// Output intentionally not clamped to [-1,1].
Tensor gvat(const Tensor& image, const Tensor& field, double eps);

/// Per-block, per-channel inner products <S_c(q),u_c(q)> and <S_c(q),1> and
/// the resulting perturbation signs (sign(0) = +1), indexed [q*channels + c].
struct CcbSigns {
    std::vector<double> dot_u, dot_1;
    std::vector<double> s_cont, s_bri;  // already scaled by the magnitudes
};
CcbSigns gccb_signs(const Tensor& image, const Tensor& field, int block, double mag_cont, double mag_bri);

/// Per-block, per-channel contrast/brightness perturbation with signs chosen
/// to maximize the linearized DE change; sign(0) = +1; output clamped to [-1,1].
Tensor gccb(const Tensor& image, const Tensor& field, int block, double mag_cont, double mag_bri);

struct RoiPartition {
    std::vector<int> omega_low;   // ascending-mass prefix of block ids
    std::vector<double> r2d;      // per-block normalized L1 mass, sums to 1
    bool zero_field = false;
};

/// Normalized per-block gradient mass and the smallest ascending prefix whose
/// cumulative mass reaches lambda_rate (crossing block included). A zero
/// total field yields an empty prefix (whole image treated as ROI).
RoiPartition roi_partition(const Tensor& field, int block, double lambda_rate);

/// Pixels inside omega_low scaled by (1-zeta)/zeta, the rest untouched.
Tensor groi(const Tensor& image, const RoiPartition& part, int block, double zeta);

/// Batch helpers (slice per image, apply the single-image definition).
Tensor slice_image(const Tensor& batch, int n);
Tensor gvat_batch(const Tensor& images, const GradField& field, double eps);
Tensor gccb_batch(const Tensor& images, const GradField& field, int block, double mag_cont, double mag_bri);
/// roi_empty_count, when given, accumulates images whose omega_low covers
/// every block (empty ROI).
Tensor groi_batch(const Tensor& images, const GradField& field, int block, double lambda_rate, double zeta,
                  long* roi_empty_count = nullptr);

}  // namespace mixgda
