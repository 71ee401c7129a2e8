#include "mixgda/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "mixgda/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mixgda {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '{';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << '}';
    return os.str();
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Sum: return "sum";
        case Op::RowSum: return "row_sum";
        case Op::LogClamped: return "log";
        case Op::PLogP: return "plogp";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Clamp: return "clamp";
        case Op::Softmax: return "softmax";
        case Op::Dense: return "dense";
        case Op::Conv2d: return "conv2d";
        case Op::BatchNorm: return "batch_norm";
        case Op::MaxPool2x2: return "max_pool2x2";
        case Op::Dropout: return "dropout";
        case Op::GlobalAvgPool: return "global_avg_pool";
        case Op::WeightNorm: return "weight_norm";
    }
    return "?";
}

int kernel_threads() {
    static const int n = [] {
        int t = 1;
#ifdef _OPENMP
        t = omp_get_max_threads();
#endif
        if (const char* env = std::getenv("MIXGDA_THREADS")) {
            int cap = std::atoi(env);
            if (cap >= 1) t = std::min(t, cap);
        }
        return t;
    }();
    return n;
}

namespace {

[[noreturn]] void shape_fail(Op op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string("op ") + op_name(op) + ": incompatible shapes " +
                                shape_str(a.shape) + " and " + shape_str(b.shape));
}

[[noreturn]] void shape_fail(Op op, const Tensor& a, const char* why) {
    throw std::invalid_argument(std::string("op ") + op_name(op) + ": bad input shape " +
                                shape_str(a.shape) + " (" + why + ")");
}

}  // namespace

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Graph::accum(NodeId id) {
    Node& n = node(id);
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape);
        n.has_grad = true;
    }
    return n.grad;
}

NodeId Graph::leaf(Tensor t, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(t);
    return push(n);
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_fail(Op::Add, x, y);
    Node n;
    n.op = Op::Add;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) n.value.data[i] = x.data[i] + y.data[i];
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_fail(Op::Sub, x, y);
    Node n;
    n.op = Op::Sub;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) n.value.data[i] = x.data[i] - y.data[i];
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_fail(Op::Mul, x, y);
    Node n;
    n.op = Op::Mul;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) n.value.data[i] = x.data[i] * y.data[i];
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
    const Tensor& x = value(a);
    Node n;
    n.op = Op::Scale;
    n.in0 = a;
    n.p0 = c;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) n.value.data[i] = c * x.data[i];
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    const Tensor& x = value(a);
    double s = 0.0;
    for (double v : x.data) s += v;
    Node n;
    n.op = Op::Sum;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

NodeId Graph::row_sum(NodeId a) {
    const Tensor& x = value(a);
    if (x.shape.size() != 2) shape_fail(Op::RowSum, x, "expected rank 2");
    const int rows = x.shape[0], cols = x.shape[1];
    Node n;
    n.op = Op::RowSum;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros({rows});
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += x.data[static_cast<size_t>(r) * cols + c];
        n.value.data[static_cast<size_t>(r)] = s;
    }
    return push(std::move(n));
}

NodeId Graph::log_clamped(NodeId a) {
    const Tensor& x = value(a);
    Node n;
    n.op = Op::LogClamped;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
        n.value.data[i] = std::log(std::max(x.data[i], kLogFloor));
    return push(std::move(n));
}

NodeId Graph::plogp(NodeId a) {
    const Tensor& x = value(a);
    Node n;
    n.op = Op::PLogP;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        double v = x.data[i];
        n.value.data[i] = v > 0.0 ? v * std::log(v) : 0.0;
    }
    return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId a, double slope) {
    const Tensor& x = value(a);
    Node n;
    n.op = Op::LeakyRelu;
    n.in0 = a;
    n.p0 = slope;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        double v = x.data[i];
        n.value.data[i] = v > 0.0 ? v : slope * v;
    }
    return push(std::move(n));
}

NodeId Graph::clamp(NodeId a, double lo, double hi) {
    const Tensor& x = value(a);
    Node n;
    n.op = Op::Clamp;
    n.in0 = a;
    n.p0 = lo;
    n.p1 = hi;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
        n.value.data[i] = std::min(std::max(x.data[i], lo), hi);
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
    const Tensor& x = value(a);
    if (x.shape.size() < 1) shape_fail(Op::Softmax, x, "expected rank >= 1");
    const int cols = x.shape.back();
    const std::int64_t rows = x.numel() / cols;
    Node n;
    n.op = Op::Softmax;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = x.data.data() + r * cols;
        double* out = n.value.data.data() + r * cols;
        double m = in[0];
        for (int c = 1; c < cols; ++c) m = std::max(m, in[c]);
        double z = 0.0;
        for (int c = 0; c < cols; ++c) {
            out[c] = std::exp(in[c] - m);
            z += out[c];
        }
        for (int c = 0; c < cols; ++c) out[c] /= z;
    }
    return push(std::move(n));
}

NodeId Graph::dense(NodeId xid, NodeId wid, NodeId bid) {
    const Tensor& x = value(xid);
    const Tensor& w = value(wid);
    if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[1]) shape_fail(Op::Dense, x, w);
    const int N = x.shape[0], in = x.shape[1], out = w.shape[0];
    if (bid != kNoNode) {
        const Tensor& b = value(bid);
        if (b.shape.size() != 1 || b.shape[0] != out) shape_fail(Op::Dense, w, b);
    }
    Node n;
    n.op = Op::Dense;
    n.in0 = xid;
    n.in1 = wid;
    n.in2 = bid;
    n.requires_grad = node(xid).requires_grad || node(wid).requires_grad ||
                      (bid != kNoNode && node(bid).requires_grad);
    n.value = Tensor::zeros({N, out});
    const double* bp = bid != kNoNode ? value(bid).data.data() : nullptr;
    for (int r = 0; r < N; ++r) {
        const double* xr = x.data.data() + static_cast<std::int64_t>(r) * in;
        double* yr = n.value.data.data() + static_cast<std::int64_t>(r) * out;
        for (int o = 0; o < out; ++o) {
            const double* wo = w.data.data() + static_cast<std::int64_t>(o) * in;
            double acc = bp ? bp[o] : 0.0;
            for (int i = 0; i < in; ++i) acc += xr[i] * wo[i];
            yr[o] = acc;
        }
    }
    return push(std::move(n));
}

NodeId Graph::conv2d(NodeId xid, NodeId wid, NodeId bid, int pad) {
    const Tensor& x = value(xid);
    const Tensor& w = value(wid);
    if (x.shape.size() != 4) shape_fail(Op::Conv2d, x, "expected {N,H,W,C} input");
    if (w.shape.size() != 4 || w.shape[3] != x.shape[3]) shape_fail(Op::Conv2d, x, w);
    const int N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const int F = w.shape[0], KH = w.shape[1], KW = w.shape[2];
    const int OH = H + 2 * pad - KH + 1, OW = W + 2 * pad - KW + 1;
    if (OH <= 0 || OW <= 0) shape_fail(Op::Conv2d, x, "kernel larger than padded input");
    if (bid != kNoNode) {
        const Tensor& b = value(bid);
        if (b.shape.size() != 1 || b.shape[0] != F) shape_fail(Op::Conv2d, w, b);
    }
    Node n;
    n.op = Op::Conv2d;
    n.in0 = xid;
    n.in1 = wid;
    n.in2 = bid;
    n.pad = pad;
    n.requires_grad = node(xid).requires_grad || node(wid).requires_grad ||
                      (bid != kNoNode && node(bid).requires_grad);
    n.value = Tensor::zeros({N, OH, OW, F});
    const double* bp = bid != kNoNode ? value(bid).data.data() : nullptr;
    const double* xp = x.data.data();
    const double* wp = w.data.data();
    double* yp = n.value.data.data();
    const std::int64_t nrows = static_cast<std::int64_t>(N) * OH;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(kernel_threads()) if (kernel_threads() > 1 && nrows > 2)
#endif
    for (std::int64_t row = 0; row < nrows; ++row) {
        const int nn = static_cast<int>(row / OH);
        const int oi = static_cast<int>(row % OH);
        for (int oj = 0; oj < OW; ++oj) {
            double* yo = yp + ((row * OW) + oj) * F;
            for (int f = 0; f < F; ++f) {
                double acc = bp ? bp[f] : 0.0;
                for (int ki = 0; ki < KH; ++ki) {
                    const int ii = oi + ki - pad;
                    if (ii < 0 || ii >= H) continue;
                    for (int kj = 0; kj < KW; ++kj) {
                        const int jj = oj + kj - pad;
                        if (jj < 0 || jj >= W) continue;
                        const double* xs = xp + (((static_cast<std::int64_t>(nn) * H + ii) * W) + jj) * C;
                        const double* ws = wp + (((static_cast<std::int64_t>(f) * KH + ki) * KW) + kj) * C;
                        for (int c = 0; c < C; ++c) acc += xs[c] * ws[c];
                    }
                }
                yo[f] = acc;
            }
        }
    }
    return push(std::move(n));
}

NodeId Graph::batch_norm(NodeId xid, NodeId gid, NodeId bid, BatchNormStats* running,
                         bool use_batch_stats, bool update_running, double eps, double update_weight) {
    const Tensor& x = value(xid);
    if (x.shape.size() < 2) shape_fail(Op::BatchNorm, x, "expected rank >= 2");
    const int C = x.shape.back();
    const Tensor& g = value(gid);
    const Tensor& b = value(bid);
    if (g.numel() != C || b.numel() != C) shape_fail(Op::BatchNorm, x, g);
    if (!use_batch_stats && running == nullptr)
        throw std::invalid_argument("op batch_norm: running stats required in eval mode");
    const std::int64_t R = x.numel() / C;

    std::vector<double> mean(static_cast<size_t>(C), 0.0), inv(static_cast<size_t>(C), 0.0);
    if (use_batch_stats) {
        for (std::int64_t r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) mean[static_cast<size_t>(c)] += x.data[static_cast<size_t>(r * C + c)];
        for (int c = 0; c < C; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(R);
        std::vector<double> var(static_cast<size_t>(C), 0.0);
        for (std::int64_t r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                double d = x.data[static_cast<size_t>(r * C + c)] - mean[static_cast<size_t>(c)];
                var[static_cast<size_t>(c)] += d * d;
            }
        for (int c = 0; c < C; ++c) {
            double sd = std::sqrt(var[static_cast<size_t>(c)] / static_cast<double>(R) + eps);
            inv[static_cast<size_t>(c)] = 1.0 / sd;
            if (update_running && running) {
                running->mean[static_cast<size_t>(c)] =
                    (1.0 - update_weight) * running->mean[static_cast<size_t>(c)] + update_weight * mean[static_cast<size_t>(c)];
                running->stddev[static_cast<size_t>(c)] =
                    (1.0 - update_weight) * running->stddev[static_cast<size_t>(c)] + update_weight * sd;
            }
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[static_cast<size_t>(c)] = running->mean[static_cast<size_t>(c)];
            inv[static_cast<size_t>(c)] = 1.0 / running->stddev[static_cast<size_t>(c)];
        }
    }

    Node n;
    n.op = Op::BatchNorm;
    n.in0 = xid;
    n.in1 = gid;
    n.in2 = bid;
    n.p0 = eps;
    n.p1 = use_batch_stats ? 1.0 : 0.0;
    n.requires_grad = node(xid).requires_grad || node(gid).requires_grad || node(bid).requires_grad;
    n.value = Tensor::zeros(x.shape);
    for (std::int64_t r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            size_t i = static_cast<size_t>(r * C + c);
            double xh = (x.data[i] - mean[static_cast<size_t>(c)]) * inv[static_cast<size_t>(c)];
            n.value.data[i] = g.data[static_cast<size_t>(c)] * xh + b.data[static_cast<size_t>(c)];
        }
    n.aux.resize(static_cast<size_t>(2 * C));
    std::copy(mean.begin(), mean.end(), n.aux.begin());
    std::copy(inv.begin(), inv.end(), n.aux.begin() + C);
    return push(std::move(n));
}

NodeId Graph::max_pool2x2(NodeId a) {
    const Tensor& x = value(a);
    if (x.shape.size() != 4 || x.shape[1] % 2 != 0 || x.shape[2] % 2 != 0)
        shape_fail(Op::MaxPool2x2, x, "expected {N,H,W,C} with even H and W");
    const int N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const int OH = H / 2, OW = W / 2;
    Node n;
    n.op = Op::MaxPool2x2;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros({N, OH, OW, C});
    n.iaux.resize(n.value.data.size());
    for (int nn = 0; nn < N; ++nn)
        for (int oi = 0; oi < OH; ++oi)
            for (int oj = 0; oj < OW; ++oj)
                for (int c = 0; c < C; ++c) {
                    // scan order matches flat index order; strict > keeps the
                    // lowest flat index on ties
                    double best = -1.0 / 0.0;
                    std::int64_t best_idx = -1;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            std::int64_t idx =
                                (((static_cast<std::int64_t>(nn) * H + 2 * oi + di) * W) + 2 * oj + dj) * C + c;
                            if (x.data[static_cast<size_t>(idx)] > best) {
                                best = x.data[static_cast<size_t>(idx)];
                                best_idx = idx;
                            }
                        }
                    std::int64_t out_idx = (((static_cast<std::int64_t>(nn) * OH + oi) * OW) + oj) * C + c;
                    n.value.data[static_cast<size_t>(out_idx)] = best;
                    n.iaux[static_cast<size_t>(out_idx)] = static_cast<std::int32_t>(best_idx);
                }
    return push(std::move(n));
}

NodeId Graph::dropout(NodeId a, double rate, std::uint64_t mask_seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("op dropout: rate must be in [0,1), got " + std::to_string(rate));
    const Tensor& x = value(a);
    Node n;
    n.op = Op::Dropout;
    n.in0 = a;
    n.p0 = rate;
    n.p1 = 1.0 / (1.0 - rate);
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros(x.shape);
    n.aux.resize(x.data.size());
    std::uint64_t state = mask_seed;
    for (size_t i = 0; i < x.data.size(); ++i) {
        double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        double keep = u >= rate ? 1.0 : 0.0;
        n.aux[i] = keep;
        n.value.data[i] = x.data[i] * keep * n.p1;
    }
    return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId a) {
    const Tensor& x = value(a);
    if (x.shape.size() != 4) shape_fail(Op::GlobalAvgPool, x, "expected {N,H,W,C}");
    const int N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    Node n;
    n.op = Op::GlobalAvgPool;
    n.in0 = a;
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::zeros({N, C});
    const double scale = 1.0 / (static_cast<double>(H) * W);
    for (int nn = 0; nn < N; ++nn)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                for (int c = 0; c < C; ++c)
                    n.value.data[static_cast<size_t>(nn) * C + c] += x.at4(nn, i, j, c) * scale;
    return push(std::move(n));
}

NodeId Graph::weight_norm(NodeId vid, NodeId sid) {
    const Tensor& v = value(vid);
    const Tensor& s = value(sid);
    if (v.shape.empty() || s.shape.size() != 1 || s.shape[0] != v.shape[0]) shape_fail(Op::WeightNorm, v, s);
    const int F = v.shape[0];
    const std::int64_t stride = v.numel() / F;
    Node n;
    n.op = Op::WeightNorm;
    n.in0 = vid;
    n.in1 = sid;
    n.requires_grad = node(vid).requires_grad || node(sid).requires_grad;
    n.value = Tensor::zeros(v.shape);
    n.aux.resize(static_cast<size_t>(F));
    for (int f = 0; f < F; ++f) {
        const double* vf = v.data.data() + f * stride;
        double nrm = 0.0;
        for (std::int64_t i = 0; i < stride; ++i) nrm += vf[i] * vf[i];
        nrm = std::sqrt(nrm);
        if (nrm < 1e-30)
            throw std::invalid_argument("op weight_norm: filter " + std::to_string(f) + " has zero norm");
        n.aux[static_cast<size_t>(f)] = nrm;
        double* wf = n.value.data.data() + f * stride;
        const double k = s.data[static_cast<size_t>(f)] / nrm;
        for (std::int64_t i = 0; i < stride; ++i) wf[i] = k * vf[i];
    }
    return push(std::move(n));
}

void Graph::backward(NodeId root) {
    Node& rn = node(root);
    if (rn.value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got shape " + shape_str(rn.value.shape));
    if (!rn.requires_grad) return;  // constant root: nothing to propagate
    accum(root).data[0] = 1.0;

    for (NodeId id = root; id >= 0; --id) {
        Node& n = node(id);
        if (!n.requires_grad || !n.has_grad || n.op == Op::Leaf) continue;
        const Tensor& dy = n.grad;
        switch (n.op) {
            case Op::Add: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += dy.data[i];
                }
                if (node(n.in1).requires_grad) {
                    Tensor& g = accum(n.in1);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += dy.data[i];
                }
                break;
            }
            case Op::Sub: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += dy.data[i];
                }
                if (node(n.in1).requires_grad) {
                    Tensor& g = accum(n.in1);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] -= dy.data[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& x = value(n.in0);
                const Tensor& y = value(n.in1);
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += dy.data[i] * y.data[i];
                }
                if (node(n.in1).requires_grad) {
                    Tensor& g = accum(n.in1);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += dy.data[i] * x.data[i];
                }
                break;
            }
            case Op::Scale: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += n.p0 * dy.data[i];
                }
                break;
            }
            case Op::Sum: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    const double d = dy.data[0];
                    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += d;
                }
                break;
            }
            case Op::RowSum: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    const int rows = g.shape[0], cols = g.shape[1];
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < cols; ++c)
                            g.data[static_cast<size_t>(r) * cols + c] += dy.data[static_cast<size_t>(r)];
                }
                break;
            }
            case Op::LogClamped: {
                if (node(n.in0).requires_grad) {
                    const Tensor& x = value(n.in0);
                    Tensor& g = accum(n.in0);
                    // zero below the floor, where the forward value is constant
                    for (size_t i = 0; i < dy.data.size(); ++i)
                        if (x.data[i] > kLogFloor) g.data[i] += dy.data[i] / x.data[i];
                }
                break;
            }
            case Op::PLogP: {
                if (node(n.in0).requires_grad) {
                    const Tensor& x = value(n.in0);
                    Tensor& g = accum(n.in0);
                    // derivative pinned to 0 at x <= 0 (constant-zero branch)
                    for (size_t i = 0; i < dy.data.size(); ++i)
                        if (x.data[i] > 0.0) g.data[i] += dy.data[i] * (std::log(x.data[i]) + 1.0);
                }
                break;
            }
            case Op::LeakyRelu: {
                if (node(n.in0).requires_grad) {
                    const Tensor& x = value(n.in0);
                    Tensor& g = accum(n.in0);
                    // derivative at exactly 0 pinned to the negative-side slope
                    for (size_t i = 0; i < dy.data.size(); ++i)
                        g.data[i] += dy.data[i] * (x.data[i] > 0.0 ? 1.0 : n.p0);
                }
                break;
            }
            case Op::Clamp: {
                if (node(n.in0).requires_grad) {
                    const Tensor& x = value(n.in0);
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i)
                        if (x.data[i] >= n.p0 && x.data[i] <= n.p1) g.data[i] += dy.data[i];
                }
                break;
            }
            case Op::Softmax: {
                if (node(n.in0).requires_grad) {
                    const Tensor& y = n.value;
                    Tensor& g = accum(n.in0);
                    const int cols = y.shape.back();
                    const std::int64_t rows = y.numel() / cols;
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const double* yr = y.data.data() + r * cols;
                        const double* dr = dy.data.data() + r * cols;
                        double dot = 0.0;
                        for (int c = 0; c < cols; ++c) dot += yr[c] * dr[c];
                        double* gr = g.data.data() + r * cols;
                        for (int c = 0; c < cols; ++c) gr[c] += yr[c] * (dr[c] - dot);
                    }
                }
                break;
            }
            case Op::Dense: {
                const Tensor& x = value(n.in0);
                const Tensor& w = value(n.in1);
                const int N = x.shape[0], in = x.shape[1], out = w.shape[0];
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (int r = 0; r < N; ++r) {
                        const double* dr = dy.data.data() + static_cast<std::int64_t>(r) * out;
                        double* gr = g.data.data() + static_cast<std::int64_t>(r) * in;
                        for (int o = 0; o < out; ++o) {
                            const double* wo = w.data.data() + static_cast<std::int64_t>(o) * in;
                            const double d = dr[o];
                            for (int i = 0; i < in; ++i) gr[i] += d * wo[i];
                        }
                    }
                }
                if (node(n.in1).requires_grad) {
                    Tensor& g = accum(n.in1);
                    for (int o = 0; o < out; ++o) {
                        double* go = g.data.data() + static_cast<std::int64_t>(o) * in;
                        for (int r = 0; r < N; ++r) {
                            const double d = dy.data[static_cast<size_t>(r) * out + o];
                            const double* xr = x.data.data() + static_cast<std::int64_t>(r) * in;
                            for (int i = 0; i < in; ++i) go[i] += d * xr[i];
                        }
                    }
                }
                if (n.in2 != kNoNode && node(n.in2).requires_grad) {
                    Tensor& g = accum(n.in2);
                    for (int r = 0; r < N; ++r)
                        for (int o = 0; o < out; ++o) g.data[static_cast<size_t>(o)] += dy.data[static_cast<size_t>(r) * out + o];
                }
                break;
            }
            case Op::Conv2d: {
                const Tensor& x = value(n.in0);
                const Tensor& w = value(n.in1);
                const int N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
                const int F = w.shape[0], KH = w.shape[1], KW = w.shape[2];
                const int OH = n.value.shape[1], OW = n.value.shape[2];
                const int pad = n.pad;
                const double* dyp = dy.data.data();
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    double* gp = g.data.data();
                    const std::int64_t nrows = static_cast<std::int64_t>(N) * H;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(kernel_threads()) if (kernel_threads() > 1 && nrows > 2)
#endif
                    for (std::int64_t row = 0; row < nrows; ++row) {
                        const int nn = static_cast<int>(row / H);
                        const int yi = static_cast<int>(row % H);
                        for (int yj = 0; yj < W; ++yj) {
                            double* gx = gp + ((row * W) + yj) * C;
                            for (int ki = 0; ki < KH; ++ki) {
                                const int oi = yi - ki + pad;
                                if (oi < 0 || oi >= OH) continue;
                                for (int kj = 0; kj < KW; ++kj) {
                                    const int oj = yj - kj + pad;
                                    if (oj < 0 || oj >= OW) continue;
                                    const double* dyo = dyp + (((static_cast<std::int64_t>(nn) * OH + oi) * OW) + oj) * F;
                                    for (int f = 0; f < F; ++f) {
                                        const double d = dyo[f];
                                        if (d == 0.0) continue;
                                        const double* ws = w.data.data() + (((static_cast<std::int64_t>(f) * KH + ki) * KW) + kj) * C;
                                        for (int c = 0; c < C; ++c) gx[c] += d * ws[c];
                                    }
                                }
                            }
                        }
                    }
                }
                if (node(n.in1).requires_grad) {
                    Tensor& g = accum(n.in1);
                    double* gp = g.data.data();
                    const double* xp = x.data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(kernel_threads()) if (kernel_threads() > 1 && F > 1)
#endif
                    for (int f = 0; f < F; ++f) {
                        for (int ki = 0; ki < KH; ++ki)
                            for (int kj = 0; kj < KW; ++kj) {
                                double* gw = gp + (((static_cast<std::int64_t>(f) * KH + ki) * KW) + kj) * C;
                                for (int nn = 0; nn < N; ++nn)
                                    for (int oi = 0; oi < OH; ++oi) {
                                        const int ii = oi + ki - pad;
                                        if (ii < 0 || ii >= H) continue;
                                        for (int oj = 0; oj < OW; ++oj) {
                                            const int jj = oj + kj - pad;
                                            if (jj < 0 || jj >= W) continue;
                                            const double d = dyp[(((static_cast<std::int64_t>(nn) * OH + oi) * OW) + oj) * F + f];
                                            if (d == 0.0) continue;
                                            const double* xs = xp + (((static_cast<std::int64_t>(nn) * H + ii) * W) + jj) * C;
                                            for (int c = 0; c < C; ++c) gw[c] += d * xs[c];
                                        }
                                    }
                            }
                    }
                }
                if (n.in2 != kNoNode && node(n.in2).requires_grad) {
                    Tensor& g = accum(n.in2);
                    const std::int64_t outs = static_cast<std::int64_t>(N) * OH * OW;
                    for (std::int64_t o = 0; o < outs; ++o)
                        for (int f = 0; f < F; ++f) g.data[static_cast<size_t>(f)] += dyp[o * F + f];
                }
                break;
            }
            case Op::BatchNorm: {
                const Tensor& x = value(n.in0);
                const Tensor& gm = value(n.in1);
                const int C = x.shape.back();
                const std::int64_t R = x.numel() / C;
                const double* mean = n.aux.data();
                const double* inv = n.aux.data() + C;
                const bool batch_mode = n.p1 != 0.0;
                std::vector<double> sum_dy(static_cast<size_t>(C), 0.0), sum_dyxh(static_cast<size_t>(C), 0.0);
                for (std::int64_t r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) {
                        size_t i = static_cast<size_t>(r * C + c);
                        double xh = (x.data[i] - mean[c]) * inv[c];
                        sum_dy[static_cast<size_t>(c)] += dy.data[i];
                        sum_dyxh[static_cast<size_t>(c)] += dy.data[i] * xh;
                    }
                if (node(n.in1).requires_grad) {
                    Tensor& g = accum(n.in1);
                    for (int c = 0; c < C; ++c) g.data[static_cast<size_t>(c)] += sum_dyxh[static_cast<size_t>(c)];
                }
                if (node(n.in2).requires_grad) {
                    Tensor& g = accum(n.in2);
                    for (int c = 0; c < C; ++c) g.data[static_cast<size_t>(c)] += sum_dy[static_cast<size_t>(c)];
                }
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    if (batch_mode) {
                        const double invR = 1.0 / static_cast<double>(R);
                        for (std::int64_t r = 0; r < R; ++r)
                            for (int c = 0; c < C; ++c) {
                                size_t i = static_cast<size_t>(r * C + c);
                                double xh = (x.data[i] - mean[c]) * inv[c];
                                g.data[i] += gm.data[static_cast<size_t>(c)] * inv[c] *
                                             (dy.data[i] - invR * sum_dy[static_cast<size_t>(c)] -
                                              xh * invR * sum_dyxh[static_cast<size_t>(c)]);
                            }
                    } else {
                        for (std::int64_t r = 0; r < R; ++r)
                            for (int c = 0; c < C; ++c) {
                                size_t i = static_cast<size_t>(r * C + c);
                                g.data[i] += dy.data[i] * gm.data[static_cast<size_t>(c)] * inv[c];
                            }
                    }
                }
                break;
            }
            case Op::MaxPool2x2: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i)
                        g.data[static_cast<size_t>(n.iaux[i])] += dy.data[i];
                }
                break;
            }
            case Op::Dropout: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    for (size_t i = 0; i < dy.data.size(); ++i) g.data[i] += dy.data[i] * n.aux[i] * n.p1;
                }
                break;
            }
            case Op::GlobalAvgPool: {
                if (node(n.in0).requires_grad) {
                    Tensor& g = accum(n.in0);
                    const int N = g.shape[0], H = g.shape[1], W = g.shape[2], C = g.shape[3];
                    const double scale = 1.0 / (static_cast<double>(H) * W);
                    for (int nn = 0; nn < N; ++nn)
                        for (int i = 0; i < H; ++i)
                            for (int j = 0; j < W; ++j)
                                for (int c = 0; c < C; ++c)
                                    g.at4(nn, i, j, c) += dy.data[static_cast<size_t>(nn) * C + c] * scale;
                }
                break;
            }
            case Op::WeightNorm: {
                const Tensor& v = value(n.in0);
                const Tensor& s = value(n.in1);
                const int F = v.shape[0];
                const std::int64_t stride = v.numel() / F;
                for (int f = 0; f < F; ++f) {
                    const double nrm = n.aux[static_cast<size_t>(f)];
                    const double* vf = v.data.data() + f * stride;
                    const double* df = dy.data.data() + f * stride;
                    double dot = 0.0;  // <dy_f, v_f/||v_f||>
                    for (std::int64_t i = 0; i < stride; ++i) dot += df[i] * vf[i];
                    dot /= nrm;
                    if (node(n.in1).requires_grad) accum(n.in1).data[static_cast<size_t>(f)] += dot;
                    if (node(n.in0).requires_grad) {
                        Tensor& g = accum(n.in0);
                        double* gf = g.data.data() + f * stride;
                        const double k = s.data[static_cast<size_t>(f)] / nrm;
                        for (std::int64_t i = 0; i < stride; ++i)
                            gf[i] += k * (df[i] - (vf[i] / nrm) * dot);
                    }
                }
                break;
            }
            case Op::Leaf:
                break;
        }
    }
}

}  // namespace mixgda
