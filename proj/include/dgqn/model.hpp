#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dgqn/network.hpp"
#include "dgqn/param_store.hpp"
#include "dgqn/simulator.hpp"
#include "dgqn/tape.hpp"

namespace dgqn {

enum class ModelVariant { dgqn, dqn_ogcn, dqn_fc };
enum class Activation { softmax, relu, sigmoid };

const char* to_string(ModelVariant v);
const char* to_string(Activation a);
ModelVariant model_variant_from(const std::string& s);
Activation activation_from(const std::string& s);

struct ModelConfig {
    ModelVariant variant = ModelVariant::dgqn;
    Activation activation = Activation::softmax;
    int embed_dim = 128;    // M
    int conv_channels = 8;  // 2-D conv output channels
    int conv_rows = 3;      // conv kernel height along the stacked lane axis
    double gamma = 0.95;
    double delay_cap_s = 2000.0;   // per lane group per interval
    double queue_cap_veh = 50.0;   // per lane group
};

constexpr int kFeatureCount = 2;  // interval delay, queue length
constexpr int kLagCount = 3;

/// Observable history, normalized to [0,1]: N x P x L with lag slices
/// ordered oldest first [s_{t-2}, s_{t-1}, s_t].
struct StateTensor {
    Tensor values;

    std::size_t lane_groups() const { return values.extent(0); }
    /// One lag as an N x P matrix (0 = oldest).
    Tensor lag(int l) const;
    friend bool operator==(const StateTensor&, const StateTensor&) = default;
};

/// Builds the state from the most recent observations (up to three are used;
/// shorter histories repeat the oldest entry).
StateTensor build_state(const std::vector<Observation>& history, const ModelConfig& cfg,
                        double vehicle_spacing_m = 7.5);

/// Per-intersection, per-phase action values. Infeasible phases hold -inf
/// and are never selected.
struct ValueMatrix {
    Tensor v;  // I x Phi

    /// Joint value of an action: the sum of its per-intersection entries.
    double q_of(const JointAction& action) const;
};

/// Exact joint maximization by per-intersection decomposition; ties resolve
/// to the lowest phase index.
std::pair<JointAction, double> greedy_joint_action(const ValueMatrix& vm);

struct Transition {
    StateTensor s;
    JointAction action;
    StateTensor s_next;
    double r = 0.0;  // +1 or -1
};

struct ModelDescription {
    std::map<std::string, std::size_t> group_elements;
    std::size_t total = 0;
    int embed_dim = 0;
    int fc_hidden = 0;
};

/// Q-network over a road network. Three variants share the factorized head
/// and loss: graph convolutions with learned masked adjacencies, graph
/// convolutions with one constant spectral-normalized adjacency, and a plain
/// fully connected embedding. The two reference variants are sized so their
/// parameter totals match the learned-adjacency variant within 2%.
class QModel {
public:
    QModel(const RoadNetwork& net, ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const RoadNetwork& network() const { return *net_; }
    int embed_dim() const { return m_; }
    int fc_hidden() const { return fc_hidden_; }
    std::size_t max_phases() const { return static_cast<std::size_t>(phi_); }
    std::size_t parameter_count() const;
    ModelDescription describe() const;

    /// Fills a store with freshly initialized parameters (deterministic for
    /// a given seed).
    void init_params(ParamStore& store, std::uint64_t seed) const;

    /// Parameter nodes bound to one trace; adjacency and weight nodes are
    /// created once and shared by every state evaluated on that trace.
    struct Bound {
        std::vector<ValueId> adj;  // one per (k,l), learned variant only
        ValueId ogcn = 0;          // constant adjacency node, ogcn only
        ValueId fc_w = 0, fc_b = 0;
        ValueId conv_k = 0, conv_b = 0;
        ValueId dense_w = 0, dense_b = 0;
        std::vector<ValueId> heads;
    };
    /// as_params=false binds every tensor as a constant (no gradients), the
    /// form used for the target side and for action selection.
    Bound bind(Trace& tr, const ParamStore& ps, bool as_params) const;

    /// Embedding vector node of shape {M, 1}.
    ValueId embed(Trace& tr, const Bound& b, const StateTensor& s) const;
    /// Per-phase value row {1, Phi} for one intersection.
    ValueId head_row(Trace& tr, const Bound& b, ValueId emb, int intersection) const;

    /// Forward-only action values.
    ValueMatrix q_values(const ParamStore& ps, const StateTensor& s) const;

    /// Learned adjacency A^{kl} = masked row softmax of the (k,l) logits.
    Tensor adjacency(const ParamStore& ps, int k, int l) const;

    struct LossInfo {
        ValueId node = 0;
        double value = 0.0;
    };
    /// Mean squared Bellman error over the batch. Targets are evaluated
    /// forward-only: no gradient reaches the target parameters.
    LossInfo loss_batch(Trace& tr, const ParamStore& incumbent, const ParamStore& target,
                        const std::vector<const Transition*>& batch, double gamma) const;

    static void copy_to_target(const ParamStore& incumbent, ParamStore& target);

    std::map<std::string, std::string> checkpoint_meta() const;
    /// Throws when a checkpoint's meta header disagrees with this model.
    void check_checkpoint_meta(const std::map<std::string, std::string>& meta) const;

    /// The (k,l) exponents of the learned adjacency set: lag 0 gets one
    /// convolution, lag 1 two, lag 2 three.
    static const std::vector<std::pair<int, int>>& adjacency_indices();

private:
    ValueId activate(Trace& tr, ValueId x) const;
    std::size_t flat_conv_width() const;

    const RoadNetwork* net_;
    ModelConfig cfg_;
    int n_ = 0, icount_ = 0, phi_ = 0;
    int m_ = 0;          // resolved embedding width (widened for ogcn)
    int fc_hidden_ = 0;  // resolved hidden width, fc variant only
    Tensor mask_;
    Tensor ogcn_adj_;
};

}  // namespace dgqn
