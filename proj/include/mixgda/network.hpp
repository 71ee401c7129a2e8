#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixgda/dataset.hpp"
#include "mixgda/graph.hpp"
#include "mixgda/rng.hpp"
#include "mixgda/tensor.hpp"

namespace mixgda {

enum class Arch : std::uint32_t { tiny = 0, table6 = 1 };

struct LayerSpec {
    enum class Kind { conv, pool_dropout, global_avg_pool, dense };
    Kind kind;
    int filters = 0;
    int kernel = 0;
    int pad = 0;
    double slope = 0.1;     // leaky relu after conv
    double dropout = 0.0;   // pool_dropout only
    bool weight_norm = false;
    bool batch_norm = false;  // dense head only; conv blocks always carry BN
};

struct NetworkConfig {
    Arch arch = Arch::tiny;
    int num_classes = 10;
    int image_side = 32;
    int image_channels = 3;
    bool weight_norm = false;  // conv + dense (CIFAR)
    bool final_bn = false;     // BN after the dense head (SVHN)
};

/// Layer list for an architecture; composing it on an image yields a K-vector.
std::vector<LayerSpec> make_layers(const NetworkConfig& cfg);

struct LayerParams {
    Tensor w;  // conv {F,k,k,C} / dense {K,In}; the raw direction v under weight norm
    Tensor s;  // weight-norm scales {F}, empty otherwise
    Tensor b;  // dense bias, empty otherwise
    Tensor gamma, beta;
    BatchNormStats bn;
    bool has_bn = false;
};

enum class NetMode { train, eval };

struct ForwardOptions {
    bool use_batch_stats = true;     // false: normalize with running statistics
    bool update_running = false;     // EMA update of running statistics
    bool dropout_enabled = false;
    std::uint64_t dropout_seed = 0;  // stream per (seed, step); instances counted
};

class NetworkState;

struct ForwardOut {
    NodeId logits = kNoNode;
    NodeId probs = kNoNode;
};

/// A network bound into one graph: parameter leaves are created once and can
/// be applied to several input batches; backward then accumulates gradients
/// across all uses.
class BoundNet {
public:
    BoundNet(Graph& g, NetworkState& net, bool params_require_grad);

    ForwardOut run(NodeId images, const ForwardOptions& opts);
    ForwardOut run(const Tensor& images, const ForwardOptions& opts);

    /// Flat gradient d(root)/d(theta) in snapshot order; call after backward.
    std::vector<double> theta_grad() const;

    Graph& graph() { return *graph_; }

private:
    Graph* graph_;
    NetworkState* net_;
    std::vector<NodeId> param_nodes_;  // aligned with NetworkState::param_list()
    int dropout_instance_ = 0;
};

class NetworkState {
public:
    static NetworkState build(const NetworkConfig& cfg, std::uint64_t init_seed);

    const NetworkConfig& config() const { return cfg_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::vector<LayerParams>& params() { return params_; }
    const std::vector<LayerParams>& params() const { return params_; }

    NetMode mode() const { return mode_; }
    void set_mode(NetMode m) { mode_ = m; }

    /// Ordered tensors making up theta (weight-norm scales and BN affine
    /// parameters included; running statistics excluded).
    std::vector<Tensor*> param_list();
    std::vector<const Tensor*> param_list() const;
    std::int64_t theta_size() const;

    std::vector<double> snapshot() const;
    void load(std::span<const double> theta);

    /// Convenience eval-mode forward; returns probabilities {N,K}.
    Tensor forward_probs(const Tensor& images);

    /// Error rate of argmax classification over a labeled set, eval mode.
    double evaluate(const std::vector<Sample>& test_set, int batch = 256);

    /// 120 forward passes over minibatches of 128 labeled samples without
    /// augmentation, refreshing BN statistics; weights untouched.
    void recalibrate_bn(const std::vector<Sample>& labeled, Rng& rng, int passes = 120, int batch = 128);

    void save_checkpoint(const std::string& path) const;
    static NetworkState load_checkpoint(const std::string& path);

    friend class BoundNet;

private:
    NetworkConfig cfg_;
    std::vector<LayerSpec> layers_;
    std::vector<LayerParams> params_;  // parallel to layers_ (empty entries for non-weighted layers)
    NetMode mode_ = NetMode::train;
};

}  // namespace mixgda
