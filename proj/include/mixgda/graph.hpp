#pragma once

#include <cstdint>
#include <vector>

#include "mixgda/tensor.hpp"

namespace mixgda {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

/// Floor applied inside log() so that frozen targets with zero mass follow the
/// 0*log(0) = 0 convention without producing NaNs.
inline constexpr double kLogFloor = 1e-12;

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Sum,
    RowSum,
    LogClamped,
    PLogP,
    LeakyRelu,
    Clamp,
    Softmax,
    Dense,
    Conv2d,
    BatchNorm,
    MaxPool2x2,
    Dropout,
    GlobalAvgPool,
    WeightNorm,
};

const char* op_name(Op op);

/// Running batch-norm statistics (mean and standard deviation per channel),
/// updated as ema = 0.9*ema + 0.1*batch.
struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    static BatchNormStats identity(int channels) {
        BatchNormStats s;
        s.mean.assign(static_cast<size_t>(channels), 0.0);
        s.stddev.assign(static_cast<size_t>(channels), 1.0);
        return s;
    }
};

/// Reverse-mode tape. Op builders evaluate eagerly (define-by-run); insertion
/// order is the topological order used by backward().
class Graph {
public:
    struct Node {
        Op op = Op::Leaf;
        bool requires_grad = false;
        NodeId in0 = kNoNode, in1 = kNoNode, in2 = kNoNode;
        double p0 = 0.0, p1 = 0.0;  // op attributes: slope, clamp bounds, scale, rate
        int pad = 0;
        Tensor value;
        Tensor grad;               // allocated during backward
        bool has_grad = false;
        std::vector<double> aux;   // saved forward state (bn mean/invstd, dropout mask)
        std::vector<std::int32_t> iaux;  // maxpool argmax offsets
    };

    NodeId leaf(Tensor t, bool requires_grad = false);
    NodeId constant(Tensor t) { return leaf(std::move(t), false); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId sum(NodeId a);
    NodeId row_sum(NodeId a);
    NodeId log_clamped(NodeId a);
    NodeId plogp(NodeId a);
    NodeId leaky_relu(NodeId a, double slope);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId softmax(NodeId a);
    NodeId dense(NodeId x, NodeId w, NodeId b);
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int pad);
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormStats* running,
                      bool use_batch_stats, bool update_running, double eps, double update_weight);
    NodeId max_pool2x2(NodeId a);
    NodeId dropout(NodeId a, double rate, std::uint64_t mask_seed);
    NodeId global_avg_pool(NodeId a);
    NodeId weight_norm(NodeId v, NodeId s);

    /// Populates grad on every requires_grad node reachable from root.
    /// root must be scalar. Gradients accumulate by summation when a node
    /// feeds multiple consumers.
    void backward(NodeId root);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    /// nullptr when the node received no gradient (constant path).
    const Tensor* grad(NodeId id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.has_grad ? &n.grad : nullptr;
    }
    size_t size() const { return nodes_.size(); }

private:
    NodeId push(Node n);
    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    Tensor& accum(NodeId id);  // grad buffer, zero-initialized on first touch

    std::vector<Node> nodes_;
};

/// Thread cap for the convolution/dense kernels. Reads MIXGDA_THREADS on
/// first use; results are bit-identical for any thread count.
int kernel_threads();

}  // namespace mixgda
