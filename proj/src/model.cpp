#include "dgqn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "dgqn/baselines.hpp"
#include "dgqn/kernels.hpp"

namespace dgqn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

const char* to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::dgqn: return "dgqn";
        case ModelVariant::dqn_ogcn: return "dqn_ogcn";
        case ModelVariant::dqn_fc: return "dqn_fc";
    }
    return "unknown";
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::softmax: return "softmax";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "unknown";
}

ModelVariant model_variant_from(const std::string& s) {
    if (s == "dgqn") return ModelVariant::dgqn;
    if (s == "dqn_ogcn") return ModelVariant::dqn_ogcn;
    if (s == "dqn_fc") return ModelVariant::dqn_fc;
    throw std::invalid_argument("unknown model variant '" + s +
                                "' (expected dgqn, dqn_ogcn or dqn_fc)");
}

Activation activation_from(const std::string& s) {
    if (s == "softmax") return Activation::softmax;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw std::invalid_argument("unknown activation '" + s +
                                "' (expected softmax, relu or sigmoid)");
}

Tensor StateTensor::lag(int l) const {
    const std::size_t n = values.extent(0), p = values.extent(1);
    Tensor out({n, p});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            out.at(i, j) = values.at(i, j, static_cast<std::size_t>(l));
    return out;
}

StateTensor build_state(const std::vector<Observation>& history, const ModelConfig& cfg,
                        double vehicle_spacing_m) {
    if (history.empty()) throw std::invalid_argument("build_state: empty observation history");
    std::vector<const Observation*> window;
    const std::size_t take = std::min<std::size_t>(kLagCount, history.size());
    for (std::size_t k = history.size() - take; k < history.size(); ++k)
        window.push_back(&history[k]);
    while (window.size() < kLagCount) window.insert(window.begin(), window.front());

    const std::size_t n = window[0]->lanes.size();
    const double queue_cap_m = cfg.queue_cap_veh * vehicle_spacing_m;
    StateTensor st;
    st.values = Tensor({n, kFeatureCount, kLagCount});
    for (int l = 0; l < kLagCount; ++l) {
        const Observation& obs = *window[static_cast<std::size_t>(l)];
        if (obs.lanes.size() != n)
            throw std::invalid_argument("build_state: observations disagree on lane-group count");
        for (std::size_t i = 0; i < n; ++i) {
            st.values.at(i, 0, static_cast<std::size_t>(l)) =
                clamp01(obs.lanes[i].delay_s / cfg.delay_cap_s);
            st.values.at(i, 1, static_cast<std::size_t>(l)) =
                clamp01(obs.lanes[i].queue_len_m / queue_cap_m);
        }
    }
    return st;
}

double ValueMatrix::q_of(const JointAction& action) const {
    if (action.size() != v.extent(0))
        throw std::invalid_argument("q_of: action length does not match intersection count");
    double q = 0.0;
    for (std::size_t i = 0; i < action.size(); ++i) {
        const int a = action[i];
        if (a < 0 || a >= static_cast<int>(v.extent(1)) ||
            v.at(i, static_cast<std::size_t>(a)) == -kInf)
            throw std::invalid_argument("q_of: infeasible phase " + std::to_string(a) +
                                        " at intersection " + std::to_string(i));
        q += v.at(i, static_cast<std::size_t>(a));
    }
    return q;
}

std::pair<JointAction, double> greedy_joint_action(const ValueMatrix& vm) {
    const std::size_t icount = vm.v.extent(0), phi = vm.v.extent(1);
    JointAction action(icount, 0);
    double q = 0.0;
    for (std::size_t i = 0; i < icount; ++i) {
        int best = -1;
        double best_v = -kInf;
        for (std::size_t j = 0; j < phi; ++j) {
            const double cell = vm.v.at(i, j);
            if (cell == -kInf) continue;
            if (best < 0 || cell > best_v) {
                best = static_cast<int>(j);
                best_v = cell;
            }
        }
        if (best < 0)
            throw std::logic_error("greedy_joint_action: intersection " + std::to_string(i) +
                                   " has no feasible phase");
        action[i] = best;
        q += best_v;
    }
    return {action, q};
}

const std::vector<std::pair<int, int>>& QModel::adjacency_indices() {
    static const std::vector<std::pair<int, int>> kl = {{1, 0}, {1, 1}, {2, 1},
                                                        {1, 2}, {2, 2}, {3, 2}};
    return kl;
}

QModel::QModel(const RoadNetwork& net, ModelConfig cfg) : net_(&net), cfg_(std::move(cfg)) {
    n_ = static_cast<int>(net.lane_group_count());
    icount_ = static_cast<int>(net.intersection_count());
    phi_ = static_cast<int>(net.max_phases());
    if (n_ == 0 || icount_ == 0 || phi_ == 0)
        throw std::invalid_argument("QModel: network has no lane groups or phases");
    if (cfg_.embed_dim < 1 || cfg_.conv_channels < 1 || cfg_.conv_rows < 1)
        throw std::invalid_argument("QModel: embed_dim, conv_channels and conv_rows must be >= 1");
    mask_ = net.mask.numel() ? net.mask : build_adjacency_mask(net);

    // Reference variants are sized to the learned-adjacency total so the
    // comparison isolates the architecture, not the capacity.
    const double head_per_m = static_cast<double>(icount_) * phi_;
    const double f = static_cast<double>(flat_conv_width());
    const double conv_total = static_cast<double>(cfg_.conv_rows * cfg_.conv_channels +
                                                  cfg_.conv_channels);
    const double adj_total = 6.0 * n_ * n_;
    const double m = cfg_.embed_dim;
    const double target_total = adj_total + conv_total + m * (f + 1.0) + m * head_per_m;

    switch (cfg_.variant) {
        case ModelVariant::dgqn:
            m_ = cfg_.embed_dim;
            break;
        case ModelVariant::dqn_ogcn:
            m_ = std::max(1, static_cast<int>(
                                 std::lround((target_total - conv_total) /
                                             (f + 1.0 + head_per_m))));
            break;
        case ModelVariant::dqn_fc: {
            m_ = cfg_.embed_dim;
            const double in = static_cast<double>(n_) * kFeatureCount * kLagCount;
            fc_hidden_ = std::max(
                1, static_cast<int>(std::lround((target_total - m - m * head_per_m) /
                                                (in + 1.0 + m))));
            break;
        }
    }

    if (cfg_.variant == ModelVariant::dqn_ogcn) {
        Tensor plain = mask_;
        for (int i = 0; i < n_; ++i) plain.at(i, i) = 0.0;
        ogcn_adj_ = spectral_normalize(plain);
    }
}

std::size_t QModel::flat_conv_width() const {
    return static_cast<std::size_t>(kLagCount) * n_ * kFeatureCount * cfg_.conv_channels;
}

ModelDescription QModel::describe() const {
    ModelDescription d;
    d.embed_dim = m_;
    d.fc_hidden = fc_hidden_;
    auto put = [&](const std::string& g, std::size_t count) {
        d.group_elements[g] += count;
        d.total += count;
    };
    const std::size_t nn = static_cast<std::size_t>(n_) * n_;
    switch (cfg_.variant) {
        case ModelVariant::dgqn:
            put("adjacency", 6 * nn);
            put("conv", static_cast<std::size_t>(cfg_.conv_rows) * cfg_.conv_channels +
                            cfg_.conv_channels);
            put("dense", static_cast<std::size_t>(m_) * flat_conv_width() + m_);
            break;
        case ModelVariant::dqn_ogcn:
            put("conv", static_cast<std::size_t>(cfg_.conv_rows) * cfg_.conv_channels +
                            cfg_.conv_channels);
            put("dense", static_cast<std::size_t>(m_) * flat_conv_width() + m_);
            break;
        case ModelVariant::dqn_fc: {
            const std::size_t in = static_cast<std::size_t>(n_) * kFeatureCount * kLagCount;
            put("fc1", static_cast<std::size_t>(fc_hidden_) * in + fc_hidden_);
            put("dense", static_cast<std::size_t>(m_) * fc_hidden_ + m_);
            break;
        }
    }
    put("heads", static_cast<std::size_t>(icount_) * m_ * phi_);
    return d;
}

std::size_t QModel::parameter_count() const { return describe().total; }

void QModel::init_params(ParamStore& store, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto uniform_fill = [&](Tensor& t, double limit) {
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
    };
    auto glorot = [&](std::vector<std::size_t> shape, double fan_in, double fan_out) {
        Tensor t(std::move(shape));
        uniform_fill(t, std::sqrt(6.0 / (fan_in + fan_out)));
        return t;
    };

    const std::size_t nn = static_cast<std::size_t>(n_);
    const std::size_t f = flat_conv_width();
    if (cfg_.variant == ModelVariant::dgqn) {
        for (auto [k, l] : adjacency_indices()) {
            Tensor logits({nn, nn});
            uniform_fill(logits, 0.01);
            store.add("adj." + std::to_string(k) + std::to_string(l), std::move(logits));
        }
    }
    if (cfg_.variant == ModelVariant::dqn_fc) {
        const std::size_t in = nn * kFeatureCount * kLagCount;
        store.add("fc1.w", glorot({static_cast<std::size_t>(fc_hidden_), in},
                                  static_cast<double>(in), fc_hidden_));
        store.add("fc1.b", Tensor({static_cast<std::size_t>(fc_hidden_), 1}));
        store.add("dense.w", glorot({static_cast<std::size_t>(m_),
                                     static_cast<std::size_t>(fc_hidden_)},
                                    fc_hidden_, m_));
        store.add("dense.b", Tensor({static_cast<std::size_t>(m_), 1}));
    } else {
        const double fan_in = cfg_.conv_rows;
        const double fan_out = static_cast<double>(cfg_.conv_rows) * cfg_.conv_channels;
        store.add("conv.kernel", glorot({static_cast<std::size_t>(cfg_.conv_rows), 1, 1,
                                         static_cast<std::size_t>(cfg_.conv_channels)},
                                        fan_in, fan_out));
        store.add("conv.bias", Tensor({static_cast<std::size_t>(cfg_.conv_channels)}));
        store.add("dense.w",
                  glorot({static_cast<std::size_t>(m_), f}, static_cast<double>(f), m_));
        store.add("dense.b", Tensor({static_cast<std::size_t>(m_), 1}));
    }
    for (int i = 0; i < icount_; ++i)
        store.add("head." + std::to_string(i),
                  glorot({static_cast<std::size_t>(m_), static_cast<std::size_t>(phi_)},
                         m_, phi_));
}

QModel::Bound QModel::bind(Trace& tr, const ParamStore& ps, bool as_params) const {
    auto leaf = [&](const std::string& name) {
        return as_params ? tr.param(name, ps.get(name)) : tr.constant(ps.get(name));
    };
    Bound b;
    if (cfg_.variant == ModelVariant::dgqn) {
        for (auto [k, l] : adjacency_indices())
            b.adj.push_back(
                tr.masked_row_softmax(leaf("adj." + std::to_string(k) + std::to_string(l)),
                                      mask_));
    } else if (cfg_.variant == ModelVariant::dqn_ogcn) {
        b.ogcn = tr.constant(ogcn_adj_);
    }
    if (cfg_.variant == ModelVariant::dqn_fc) {
        b.fc_w = leaf("fc1.w");
        b.fc_b = leaf("fc1.b");
    } else {
        b.conv_k = leaf("conv.kernel");
        b.conv_b = leaf("conv.bias");
    }
    b.dense_w = leaf("dense.w");
    b.dense_b = leaf("dense.b");
    for (int i = 0; i < icount_; ++i) b.heads.push_back(leaf("head." + std::to_string(i)));
    return b;
}

ValueId QModel::activate(Trace& tr, ValueId x) const {
    switch (cfg_.activation) {
        case Activation::softmax: return tr.softmax_over_axis(x, 0);
        case Activation::relu: return tr.relu(x);
        case Activation::sigmoid: return tr.sigmoid(x);
    }
    throw std::logic_error("unreachable activation");
}

ValueId QModel::embed(Trace& tr, const Bound& b, const StateTensor& s) const {
    if (s.values.rank() != 3 || s.values.extent(0) != static_cast<std::size_t>(n_) ||
        s.values.extent(1) != kFeatureCount || s.values.extent(2) != kLagCount)
        throw std::invalid_argument("embed: state tensor shape does not match the network");

    if (cfg_.variant == ModelVariant::dqn_fc) {
        const std::size_t in = static_cast<std::size_t>(n_) * kFeatureCount * kLagCount;
        ValueId flat = tr.constant(s.values.reshaped({in, 1}));
        ValueId hidden = tr.relu(tr.add(tr.matmul(b.fc_w, flat), b.fc_b));
        return tr.add(tr.matmul(b.dense_w, hidden), b.dense_b);
    }

    // Older lags pass through more graph convolutions: one for the current
    // state, two for t-1, three for t-2.
    std::vector<ValueId> stacked;
    for (int storage = 0; storage < kLagCount; ++storage) {
        const int lag = kLagCount - 1 - storage;
        ValueId x = tr.constant(s.lag(storage));
        for (int k = 1; k <= lag + 1; ++k) {
            ValueId a;
            if (cfg_.variant == ModelVariant::dgqn) {
                const auto& kl = adjacency_indices();
                const auto it = std::find(kl.begin(), kl.end(), std::make_pair(k, lag));
                a = b.adj[static_cast<std::size_t>(it - kl.begin())];
            } else {
                a = b.ogcn;
            }
            x = activate(tr, tr.matmul(a, x));
        }
        stacked.push_back(x);
    }
    ValueId h = tr.concat_rows(stacked);  // (3N, P)
    ValueId img = tr.reshape(h, {static_cast<std::size_t>(kLagCount) * n_, kFeatureCount, 1});
    ValueId conv = tr.relu(tr.add_bias_channels(tr.conv2d(img, b.conv_k), b.conv_b));
    ValueId flat = tr.reshape(conv, {flat_conv_width(), 1});
    return tr.add(tr.matmul(b.dense_w, flat), b.dense_b);
}

ValueId QModel::head_row(Trace& tr, const Bound& b, ValueId emb, int intersection) const {
    return tr.matmul(emb, b.heads[static_cast<std::size_t>(intersection)], /*trans_a=*/true);
}

ValueMatrix QModel::q_values(const ParamStore& ps, const StateTensor& s) const {
    Trace tr;
    Bound b = bind(tr, ps, /*as_params=*/false);
    ValueId emb = embed(tr, b, s);
    ValueMatrix vm;
    vm.v = Tensor::full({static_cast<std::size_t>(icount_), static_cast<std::size_t>(phi_)},
                        -kInf);
    for (int i = 0; i < icount_; ++i) {
        const Tensor& row = tr.value(head_row(tr, b, emb, i));
        const std::size_t feasible = net_->intersections[static_cast<std::size_t>(i)]
                                         .phases.size();
        for (std::size_t j = 0; j < feasible; ++j)
            vm.v.at(static_cast<std::size_t>(i), j) = row.data()[j];
    }
    return vm;
}

Tensor QModel::adjacency(const ParamStore& ps, int k, int l) const {
    if (cfg_.variant != ModelVariant::dgqn)
        throw std::logic_error("adjacency: this variant has no learned adjacency");
    const auto& kl = adjacency_indices();
    if (std::find(kl.begin(), kl.end(), std::make_pair(k, l)) == kl.end())
        throw std::invalid_argument("adjacency: undefined index (" + std::to_string(k) + "," +
                                    std::to_string(l) + ")");
    return kern::masked_row_softmax(ps.get("adj." + std::to_string(k) + std::to_string(l)),
                                    mask_);
}

QModel::LossInfo QModel::loss_batch(Trace& tr, const ParamStore& incumbent,
                                    const ParamStore& target,
                                    const std::vector<const Transition*>& batch,
                                    double gamma) const {
    if (batch.empty()) throw std::invalid_argument("loss_batch: empty batch");
    Bound b = bind(tr, incumbent, /*as_params=*/true);
    ValueId total = 0;
    bool first = true;
    for (const Transition* t : batch) {
        if (static_cast<int>(t->action.size()) != icount_)
            throw std::invalid_argument("loss_batch: transition action length mismatch");
        // The target side is evaluated outside the trace: it contributes a
        // constant, so no gradient can reach the target parameters.
        const double y = t->r + gamma * greedy_joint_action(q_values(target, t->s_next)).second;
        ValueId emb = embed(tr, b, t->s);
        ValueId q = 0;
        bool first_q = true;
        for (int i = 0; i < icount_; ++i) {
            ValueId cell = tr.pick(head_row(tr, b, emb, i),
                                   static_cast<std::size_t>(t->action[i]));
            q = first_q ? cell : tr.add(q, cell);
            first_q = false;
        }
        ValueId err = tr.square(tr.sub_from_const(y, q));
        total = first ? err : tr.add(total, err);
        first = false;
    }
    ValueId loss = tr.scale(total, 1.0 / static_cast<double>(batch.size()));
    return {loss, tr.value(loss).data()[0]};
}

void QModel::copy_to_target(const ParamStore& incumbent, ParamStore& target) {
    if (target.names() == incumbent.names())
        target.copy_values_from(incumbent);
    else
        target = incumbent;
}

std::map<std::string, std::string> QModel::checkpoint_meta() const {
    return {
        {"model", to_string(cfg_.variant)},
        {"activation", to_string(cfg_.activation)},
        {"embed_dim", std::to_string(cfg_.embed_dim)},
        {"fc_hidden", std::to_string(fc_hidden_)},
        {"conv_channels", std::to_string(cfg_.conv_channels)},
        {"conv_rows", std::to_string(cfg_.conv_rows)},
        {"gamma", fmt_double(cfg_.gamma)},
        {"delay_cap_s", fmt_double(cfg_.delay_cap_s)},
        {"queue_cap_veh", fmt_double(cfg_.queue_cap_veh)},
        {"lane_groups", std::to_string(n_)},
        {"features", std::to_string(kFeatureCount)},
        {"lags", std::to_string(kLagCount)},
        {"intersections", std::to_string(icount_)},
        {"max_phases", std::to_string(phi_)},
    };
}

void QModel::check_checkpoint_meta(const std::map<std::string, std::string>& meta) const {
    for (const auto& [key, want] : checkpoint_meta()) {
        const auto it = meta.find(key);
        if (it == meta.end())
            throw std::invalid_argument("checkpoint meta is missing '" + key + "'");
        if (it->second != want)
            throw std::invalid_argument("checkpoint meta mismatch for '" + key + "': have " +
                                        it->second + ", model expects " + want);
    }
}

}  // namespace dgqn
