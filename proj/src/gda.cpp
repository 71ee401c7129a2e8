#include "mixgda/gda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mixgda {

namespace {
constexpr double kZeroFieldTol = 1e-12;

double sign_pos(double x) { return x >= 0.0 ? 1.0 : -1.0; }  // sign(0) pinned to +1
}  // namespace

BlockGrid::BlockGrid(int side_, int block_) : side(side_), block(block_) {
    if (block <= 0 || side % block != 0)
        throw std::invalid_argument("BlockGrid: image side " + std::to_string(side) +
                                    " not divisible by block size " + std::to_string(block));
    per_row = side / block;
    count = per_row * per_row;
}

Tensor input_gradient(NetworkState& net, const Tensor& images, const ScalarBuilder& scalar_fn,
                      const GdaForwardOptions& opts) {
    Graph g;
    BoundNet bound(g, net, false);  // frozen weights: no gradients retained on theta
    NodeId input = g.leaf(images, true);
    ForwardOptions fwd;
    fwd.use_batch_stats = opts.use_batch_stats;
    ForwardOut out = bound.run(input, fwd);
    g.backward(scalar_fn(g, out.probs));
    const Tensor* input_grad = g.grad(input);
    return input_grad ? *input_grad : Tensor::zeros(images.shape);
}

GradField grad_field(NetworkState& net, const Tensor& images, double a, const GdaForwardOptions& opts,
                     Tensor* probs_out) {
    const int n = images.shape[0];
    const int k = net.config().num_classes;
    GradField field;
    field.r3d = input_gradient(
        net, images,
        [&](Graph& g, NodeId probs_node) {
            const Tensor& probs = g.value(probs_node);
            if (probs_out) *probs_out = probs;
            // PPI masks from the same forward; piecewise constant in u
            Tensor mask = Tensor::zeros({n, k});
            for (int i = 0; i < n; ++i) {
                ProbDist row(probs.data.begin() + static_cast<std::ptrdiff_t>(i) * k,
                             probs.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * k);
                PPIMask m = ppi(row, a);
                std::copy(m.indicator.begin(), m.indicator.end(),
                          mask.data.begin() + static_cast<std::ptrdiff_t>(i) * k);
            }
            // sum_i DE_i = -sum(plogp(mask.g)) - sum(plogp(1 - row_sum(mask.g)))
            NodeId masked = g.mul(probs_node, g.constant(mask));
            NodeId residual = g.sub(g.constant(Tensor::full({n}, 1.0)), g.row_sum(masked));
            return g.scale(g.add(g.sum(g.plogp(masked)), g.sum(g.plogp(residual))), -1.0);
        },
        opts);

    field.l1.resize(static_cast<size_t>(n), 0.0);
    const std::int64_t per = images.numel() / n;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < per; ++j) s += std::abs(field.r3d.data[static_cast<size_t>(i * per + j)]);
        field.l1[static_cast<size_t>(i)] = s;
    }
    return field;
}

Tensor gvat(const Tensor& image, const Tensor& field, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("gvat: eps must be positive");
    if (!image.same_shape(field)) throw std::invalid_argument("gvat: image/field shape mismatch");
    double l1 = 0.0;
    for (double v : field.data) l1 += std::abs(v);
    Tensor out = image;
    if (l1 < kZeroFieldTol) return out;  // degenerate zero field: identity
    const double k = eps / l1;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += k * field.data[i];
    return out;
}

CcbSigns gccb_signs(const Tensor& image, const Tensor& field, int block, double mag_cont, double mag_bri) {
    const int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    if (h != w) throw std::invalid_argument("gccb: image must be square");
    const BlockGrid grid(h, block);
    if (!image.same_shape(field)) throw std::invalid_argument("gccb: image/field shape mismatch");

    CcbSigns s;
    s.dot_u.assign(static_cast<size_t>(grid.count * c), 0.0);
    s.dot_1.assign(static_cast<size_t>(grid.count * c), 0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int q = grid.block_index(i, j);
            for (int ch = 0; ch < c; ++ch) {
                const size_t px = static_cast<size_t>((i * w + j) * c + ch);
                s.dot_u[static_cast<size_t>(q * c + ch)] += field.data[px] * image.data[px];
                s.dot_1[static_cast<size_t>(q * c + ch)] += field.data[px];
            }
        }
    s.s_cont.resize(s.dot_u.size());
    s.s_bri.resize(s.dot_1.size());
    for (size_t i = 0; i < s.dot_u.size(); ++i) {
        s.s_cont[i] = mag_cont * sign_pos(s.dot_u[i]);
        s.s_bri[i] = mag_bri * sign_pos(s.dot_1[i]);
    }
    return s;
}

Tensor gccb(const Tensor& image, const Tensor& field, int block, double mag_cont, double mag_bri) {
    const int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    const BlockGrid grid(h, block);
    const CcbSigns s = gccb_signs(image, field, block, mag_cont, mag_bri);

    Tensor out = Tensor::zeros(image.shape);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int q = grid.block_index(i, j);
            for (int ch = 0; ch < c; ++ch) {
                const size_t px = static_cast<size_t>((i * w + j) * c + ch);
                const double v = (1.0 + s.s_cont[static_cast<size_t>(q * c + ch)]) * image.data[px] +
                                 s.s_bri[static_cast<size_t>(q * c + ch)];
                out.data[px] = std::min(std::max(v, -1.0), 1.0);
            }
        }
    return out;
}

RoiPartition roi_partition(const Tensor& field, int block, double lambda_rate) {
    if (lambda_rate < 0.0 || lambda_rate > 1.0)
        throw std::invalid_argument("roi_partition: lambda_rate must be in [0,1]");
    const int h = field.shape[0], w = field.shape[1], c = field.shape[2];
    if (h != w) throw std::invalid_argument("roi_partition: image must be square");
    const BlockGrid grid(h, block);

    RoiPartition part;
    part.r2d.assign(static_cast<size_t>(grid.count), 0.0);
    double total = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int q = grid.block_index(i, j);
            for (int ch = 0; ch < c; ++ch) {
                const double v = std::abs(field.data[static_cast<size_t>((i * w + j) * c + ch)]);
                part.r2d[static_cast<size_t>(q)] += v;
                total += v;
            }
        }
    if (total < kZeroFieldTol) {
        part.zero_field = true;
        std::fill(part.r2d.begin(), part.r2d.end(), 0.0);
        return part;  // omega_low empty: whole image is ROI
    }
    for (double& v : part.r2d) v /= total;

    // ascending sort, stable tie-break by block index
    std::vector<int> order(static_cast<size_t>(grid.count));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return part.r2d[static_cast<size_t>(x)] < part.r2d[static_cast<size_t>(y)]; });

    double cum = 0.0;
    size_t l = order.size();  // fall back to all blocks if rounding keeps cum below lambda
    for (size_t i = 0; i < order.size(); ++i) {
        cum += part.r2d[static_cast<size_t>(order[i])];
        if (cum >= lambda_rate) {
            l = i + 1;
            break;
        }
    }
    part.omega_low.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(l));
    return part;
}

Tensor groi(const Tensor& image, const RoiPartition& part, int block, double zeta) {
    if (zeta <= 0.5 || zeta > 1.0) throw std::invalid_argument("groi: zeta must be in (0.5, 1]");
    const int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    const BlockGrid grid(h, block);
    std::vector<bool> low(static_cast<size_t>(grid.count), false);
    for (int q : part.omega_low) low[static_cast<size_t>(q)] = true;
    const double factor = (1.0 - zeta) / zeta;
    Tensor out = image;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (!low[static_cast<size_t>(grid.block_index(i, j))]) continue;
            for (int ch = 0; ch < c; ++ch) out.data[static_cast<size_t>((i * w + j) * c + ch)] *= factor;
        }
    return out;
}

Tensor slice_image(const Tensor& batch, int n) {
    Shape s(batch.shape.begin() + 1, batch.shape.end());
    const std::int64_t per = shape_numel(s);
    Tensor out = Tensor::zeros(s);
    std::copy(batch.data.begin() + static_cast<std::ptrdiff_t>(n * per),
              batch.data.begin() + static_cast<std::ptrdiff_t>((n + 1) * per), out.data.begin());
    return out;
}

namespace {
void place_image(Tensor& batch, int n, const Tensor& img) {
    std::copy(img.data.begin(), img.data.end(),
              batch.data.begin() + static_cast<std::ptrdiff_t>(n) * img.numel());
}
}  // namespace

Tensor gvat_batch(const Tensor& images, const GradField& field, double eps) {
    Tensor out = images;
    const int n = images.shape[0];
    for (int i = 0; i < n; ++i) place_image(out, i, gvat(slice_image(images, i), slice_image(field.r3d, i), eps));
    return out;
}

Tensor gccb_batch(const Tensor& images, const GradField& field, int block, double mag_cont, double mag_bri) {
    Tensor out = images;
    const int n = images.shape[0];
    for (int i = 0; i < n; ++i)
        place_image(out, i, gccb(slice_image(images, i), slice_image(field.r3d, i), block, mag_cont, mag_bri));
    return out;
}

Tensor groi_batch(const Tensor& images, const GradField& field, int block, double lambda_rate, double zeta,
                  long* roi_empty_count) {
    Tensor out = images;
    const int n = images.shape[0];
    for (int i = 0; i < n; ++i) {
        const Tensor f = slice_image(field.r3d, i);
        const RoiPartition part = roi_partition(f, block, lambda_rate);
        if (roi_empty_count && !part.zero_field &&
            part.omega_low.size() == part.r2d.size())
            ++*roi_empty_count;
        place_image(out, i, groi(slice_image(images, i), part, block, zeta));
    }
    return out;
}

}  // namespace mixgda
