#pragma once

#include <unordered_map>
#include <vector>

#include "cep3/encoder.hpp"

namespace cep3 {

// Community graph maintained during autoregressive forecasting: seeded with
// L-hop connectivity between candidates, grown by one edge per predicted
// (or teacher-forced) event. Undirected multigraph; multiplicity weights the
// mean aggregation.
class RolloutGraph {
  public:
    RolloutGraph(std::vector<NodeId> candidates, std::size_t initial_edges)
        : candidates_(std::move(candidates)),
          adj_(candidates_.size()),
          initial_edges_(initial_edges) {
        for (std::size_t i = 0; i < candidates_.size(); ++i)
            index_of_[candidates_[i]] = i;
    }

    const std::vector<NodeId>& candidates() const { return candidates_; }
    std::size_t size() const { return candidates_.size(); }
    bool contains(NodeId v) const { return index_of_.count(v) != 0; }
    std::size_t index_of(NodeId v) const { return index_of_.at(v); }
    const std::vector<std::size_t>& neighbors(std::size_t idx) const {
        return adj_[idx];
    }
    std::size_t edge_count() const { return edge_count_; }
    std::size_t initial_edge_count() const { return initial_edges_; }

    void add_edge_by_index(std::size_t u, std::size_t v) {
        adj_[u].push_back(v);
        if (v != u) adj_[v].push_back(u);
        ++edge_count_;
    }

  private:
    std::vector<NodeId> candidates_;
    std::unordered_map<NodeId, std::size_t> index_of_;
    std::vector<std::vector<std::size_t>> adj_;
    std::size_t edge_count_ = 0;
    std::size_t initial_edges_ = 0;
};

struct UpdateConfig {
    std::size_t hidden_dim = 100;
    std::size_t d_time = 16;
    std::size_t msg_hidden = 0;      // 0 -> hidden_dim
    std::size_t passes = 1;          // message-passing layers P
    std::size_t mlp_hidden_dim() const { return msg_hidden ? msg_hidden : hidden_dim; }
};

void update_net_init(ad::ParameterSet& ps, const UpdateConfig& cfg);

// Connects candidate pairs whose hop distance in the static projection of
// the history graph is <= L.
RolloutGraph init_rollout_graph(const TemporalGraph& graph,
                                const std::vector<NodeId>& community,
                                std::size_t L);

// Appends one predicted event; endpoints must lie in the community.
void apply_event(RolloutGraph& g, NodeId u, NodeId v);

// Full propagation: every community node gets P rounds of mean-aggregated
// MLP messages followed by a GRU step with phi(dt).
// states is indexed in candidate order.
std::vector<ad::Var> propagate_update(ad::Tape& t, const ad::ParameterSet& ps,
                                      const UpdateConfig& cfg,
                                      const RolloutGraph& g,
                                      const std::vector<ad::Var>& states,
                                      double dt);

// Ablated update: identical machinery, but only the event's two incident
// nodes are recomputed.
std::vector<ad::Var> incident_only_update(ad::Tape& t, const ad::ParameterSet& ps,
                                          const UpdateConfig& cfg,
                                          const RolloutGraph& g,
                                          const std::vector<ad::Var>& states,
                                          double dt, NodeId u, NodeId v);

}  // namespace cep3
