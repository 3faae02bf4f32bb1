#include "cep3/encoder.hpp"

#include <set>
#include <string>

namespace cep3 {

using ad::ParameterSet;
using ad::Tape;
using ad::Var;

const char* kTimeEncPrefix = "time";

namespace {
std::string layer_prefix(std::size_t l) { return "enc.l" + std::to_string(l); }
}

void encoder_init(ParameterSet& ps, const EncoderConfig& cfg,
                  std::size_t feature_dim) {
    if (cfg.hidden_dim % cfg.heads != 0)
        throw ad::ShapeError("encoder: heads must divide hidden_dim");
    if (!ps.has(std::string(kTimeEncPrefix) + ".omega"))
        ad::time_enc_init(ps, kTimeEncPrefix, cfg.d_time);
    const std::size_t dq = cfg.hidden_dim + cfg.d_time;
    const std::size_t dkv = cfg.hidden_dim + feature_dim + cfg.d_time;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        ad::mha_init(ps, layer_prefix(l) + ".attn", dq, dkv, cfg.hidden_dim,
                     cfg.heads);
        ad::mlp_init(ps, layer_prefix(l) + ".mlp", 2 * cfg.hidden_dim,
                     cfg.mlp_hidden_dim(), cfg.hidden_dim);
    }
}

Var encode_layer_node(Tape& t, const ParameterSet& ps, const EncoderConfig& cfg,
                      std::size_t layer, Var z_prev_self,
                      const std::vector<Var>& z_prev_neighbors,
                      const std::vector<const Event*>& neighbor_events,
                      const std::vector<double>& neighbor_dts,
                      std::size_t feature_dim) {
    const std::string lp = layer_prefix(layer);
    Var context;
    if (z_prev_neighbors.empty()) {
        context = t.constant(ad::Tensor(1, cfg.hidden_dim, 0.0));
    } else {
        Var q = t.concat_cols(z_prev_self,
                              ad::time_enc_forward(t, ps, kTimeEncPrefix, 0.0));
        std::vector<Var> key_rows;
        key_rows.reserve(z_prev_neighbors.size());
        for (std::size_t j = 0; j < z_prev_neighbors.size(); ++j) {
            const Event* e = neighbor_events[j];
            ad::Tensor feat(1, feature_dim, 0.0);
            if (e && e->features.size() == feature_dim)
                feat.v.assign(e->features.begin(), e->features.end());
            else if (e && !e->features.empty() && e->features.size() != feature_dim)
                throw ad::ShapeError("encoder: event feature arity mismatch");
            std::vector<Var> parts{z_prev_neighbors[j]};
            if (feature_dim > 0) parts.push_back(t.constant(std::move(feat)));
            parts.push_back(
                ad::time_enc_forward(t, ps, kTimeEncPrefix, neighbor_dts[j]));
            key_rows.push_back(t.concat_cols(parts));
        }
        Var keys = t.stack_rows(key_rows);
        context = ad::mha_forward(t, ps, lp + ".attn", q, keys, keys, cfg.heads,
                                  cfg.hidden_dim);
    }
    return ad::mlp_forward(t, ps, lp + ".mlp", t.concat_cols(z_prev_self, context));
}

NodeStates encode(Tape& t, const ParameterSet& ps, const TemporalGraph& graph,
                  const std::vector<NodeId>& nodes, double t_n,
                  const EncoderConfig& cfg, std::mt19937_64* sampler_rng) {
    const std::size_t feature_dim = graph.stream().feature_dim;

    // All hops are bounded by the original horizon, so one sample per node
    // serves every layer.
    std::map<NodeId, std::vector<TemporalGraph::Incidence>> samples;
    auto sample_of = [&](NodeId v) -> const std::vector<TemporalGraph::Incidence>& {
        auto it = samples.find(v);
        if (it != samples.end()) return it->second;
        auto inc = sampler_rng
                       ? graph.uniform_before(v, t_n, cfg.fanout, *sampler_rng)
                       : graph.recent_before(v, t_n, cfg.fanout);
        return samples.emplace(v, std::move(inc)).first->second;
    };

    // frontier[l] = nodes whose level-l representation is needed.
    std::vector<std::set<NodeId>> frontier(cfg.layers + 1);
    frontier[cfg.layers].insert(nodes.begin(), nodes.end());
    for (std::size_t l = cfg.layers; l >= 1; --l) {
        frontier[l - 1] = frontier[l];
        for (NodeId v : frontier[l])
            for (const auto& inc : sample_of(v)) frontier[l - 1].insert(inc.neighbor);
    }

    std::map<NodeId, Var> z_prev;
    for (NodeId v : frontier[0])
        z_prev[v] = t.constant(ad::Tensor(1, cfg.hidden_dim, 0.0));

    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        std::map<NodeId, Var> z_cur;
        for (NodeId v : frontier[l]) {
            const auto& inc = sample_of(v);
            std::vector<Var> zn;
            std::vector<const Event*> ev;
            std::vector<double> dts;
            zn.reserve(inc.size());
            for (const auto& e : inc) {
                zn.push_back(z_prev.at(e.neighbor));
                ev.push_back(&graph.stream().events[e.event_index]);
                dts.push_back(t_n - e.time);
            }
            z_cur[v] = encode_layer_node(t, ps, cfg, l, z_prev.at(v), zn, ev, dts,
                                         feature_dim);
        }
        z_prev = std::move(z_cur);
    }

    NodeStates out;
    for (NodeId v : nodes) out[v] = z_prev.at(v);
    return out;
}

}  // namespace cep3
