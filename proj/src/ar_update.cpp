#include "cep3/ar_update.hpp"

#include <deque>
#include <map>
#include <set>

namespace cep3 {

using ad::ParameterSet;
using ad::Tape;
using ad::Var;

void update_net_init(ParameterSet& ps, const UpdateConfig& cfg) {
    if (!ps.has(std::string(kTimeEncPrefix) + ".omega"))
        ad::time_enc_init(ps, kTimeEncPrefix, cfg.d_time);
    ad::mlp_init(ps, "upd.msg", 2 * cfg.hidden_dim, cfg.mlp_hidden_dim(),
                 cfg.hidden_dim);
    ad::gru_init(ps, "upd.gru", cfg.hidden_dim + cfg.d_time, cfg.hidden_dim);
}

RolloutGraph init_rollout_graph(const TemporalGraph& graph,
                                const std::vector<NodeId>& community,
                                std::size_t L) {
    if (L < 1) throw DataError("init_rollout_graph: L must be >= 1");
    std::set<NodeId> cand(community.begin(), community.end());
    std::vector<NodeId> candidates(cand.begin(), cand.end());

    // Static unique-neighbor adjacency over the full history graph.
    const NodeId n = graph.node_count();
    std::vector<std::set<NodeId>> nbrs(static_cast<std::size_t>(n));
    for (NodeId v = 0; v < n; ++v)
        for (const auto& inc : graph.incident(v))
            nbrs[static_cast<std::size_t>(v)].insert(inc.neighbor);

    std::vector<std::pair<std::size_t, std::size_t>> init_edges;
    std::map<NodeId, std::size_t> index_of;
    for (std::size_t i = 0; i < candidates.size(); ++i) index_of[candidates[i]] = i;
    for (NodeId a : candidates) {
        // BFS from a up to depth L; connect to candidates b > a to avoid
        // double insertion.
        std::vector<int> dist(static_cast<std::size_t>(n), -1);
        std::deque<NodeId> q{a};
        dist[static_cast<std::size_t>(a)] = 0;
        while (!q.empty()) {
            NodeId x = q.front();
            q.pop_front();
            int dx = dist[static_cast<std::size_t>(x)];
            if (dx >= static_cast<int>(L)) continue;
            for (NodeId y : nbrs[static_cast<std::size_t>(x)]) {
                if (dist[static_cast<std::size_t>(y)] < 0) {
                    dist[static_cast<std::size_t>(y)] = dx + 1;
                    q.push_back(y);
                }
            }
        }
        for (NodeId b : candidates) {
            if (b <= a) continue;
            int d = dist[static_cast<std::size_t>(b)];
            if (d > 0 && d <= static_cast<int>(L))
                init_edges.emplace_back(index_of[a], index_of[b]);
        }
    }
    RolloutGraph g(std::move(candidates), init_edges.size());
    for (const auto& [i, j] : init_edges) g.add_edge_by_index(i, j);
    return g;
}

void apply_event(RolloutGraph& g, NodeId u, NodeId v) {
    if (!g.contains(u) || !g.contains(v))
        throw DataError("apply_event: endpoint outside the community");
    g.add_edge_by_index(g.index_of(u), g.index_of(v));
}

namespace {

// One round of mean-aggregated messages for node idx.
Var message_round(Tape& t, const ParameterSet& ps, const UpdateConfig& cfg,
                  const RolloutGraph& g, const std::vector<Var>& w,
                  std::size_t idx) {
    const auto& nb = g.neighbors(idx);
    if (nb.empty()) return t.constant(ad::Tensor(1, cfg.hidden_dim, 0.0));
    std::vector<Var> rows;
    rows.reserve(nb.size());
    for (std::size_t u : nb) rows.push_back(t.concat_cols(w[u], w[idx]));
    Var msgs = ad::mlp_forward(t, ps, "upd.msg", t.stack_rows(rows));
    return t.mean_rows(msgs);
}

Var gru_step(Tape& t, const ParameterSet& ps, const UpdateConfig& cfg, Var w_final,
             Var h_prev, double dt) {
    Var phi = ad::time_enc_forward(t, ps, kTimeEncPrefix, dt);
    return ad::gru_forward(t, ps, "upd.gru", t.concat_cols(w_final, phi), h_prev);
}

}  // namespace

std::vector<Var> propagate_update(Tape& t, const ParameterSet& ps,
                                  const UpdateConfig& cfg, const RolloutGraph& g,
                                  const std::vector<Var>& states, double dt) {
    if (states.size() != g.size())
        throw DataError("propagate_update: states must cover the community");
    std::vector<Var> w = states;
    for (std::size_t p = 0; p < cfg.passes; ++p) {
        std::vector<Var> w_next(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            w_next[i] = message_round(t, ps, cfg, g, w, i);
        w = std::move(w_next);
    }
    std::vector<Var> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        out[i] = gru_step(t, ps, cfg, w[i], states[i], dt);
    return out;
}

std::vector<Var> incident_only_update(Tape& t, const ParameterSet& ps,
                                      const UpdateConfig& cfg,
                                      const RolloutGraph& g,
                                      const std::vector<Var>& states, double dt,
                                      NodeId u, NodeId v) {
    if (states.size() != g.size())
        throw DataError("incident_only_update: states must cover the community");
    if (!g.contains(u) || !g.contains(v))
        throw DataError("incident_only_update: endpoint outside the community");
    std::set<std::size_t> touched{g.index_of(u), g.index_of(v)};
    std::vector<Var> w = states;
    for (std::size_t p = 0; p < cfg.passes; ++p) {
        std::vector<Var> w_next = w;
        for (std::size_t i : touched)
            w_next[i] = message_round(t, ps, cfg, g, w, i);
        w = std::move(w_next);
    }
    std::vector<Var> out = states;
    for (std::size_t i : touched) out[i] = gru_step(t, ps, cfg, w[i], states[i], dt);
    return out;
}

}  // namespace cep3
