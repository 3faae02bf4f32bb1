#pragma once

#include <map>
#include <vector>

#include "cep3/ctdg.hpp"
#include "cep3/nn.hpp"
#include "cep3/tensor.hpp"

namespace cep3 {

struct EncoderConfig {
    std::size_t layers = 2;
    std::size_t hidden_dim = 100;
    std::size_t heads = 4;
    std::size_t fanout = 15;
    std::size_t d_time = 16;
    std::size_t mlp_hidden = 0;  // 0 -> hidden_dim
    bool uniform_sampling = false;

    std::size_t mlp_hidden_dim() const { return mlp_hidden ? mlp_hidden : hidden_dim; }
};

// Per-node states at the encoding horizon. Values are 1 x hidden_dim rows.
using NodeStates = std::map<NodeId, ad::Var>;

// Registers the attention stack (per layer: MHA + combine MLP). The shared
// time encoder is registered separately under `time_prefix` so the
// forecaster heads can reuse it.
void encoder_init(ad::ParameterSet& ps, const EncoderConfig& cfg,
                  std::size_t feature_dim);
extern const char* kTimeEncPrefix;

// One attention layer: for each requested node, attends over its sampled
// neighbors' layer-(l-1) representations; empty neighborhoods contribute a
// zero context vector.
ad::Var encode_layer_node(ad::Tape& t, const ad::ParameterSet& ps,
                          const EncoderConfig& cfg, std::size_t layer,
                          ad::Var z_prev_self,
                          const std::vector<ad::Var>& z_prev_neighbors,
                          const std::vector<const Event*>& neighbor_events,
                          const std::vector<double>& neighbor_dts,
                          std::size_t feature_dim);

// Full L-layer encode of `nodes` at horizon t_n. Only events with
// time < t_n are visible.
NodeStates encode(ad::Tape& t, const ad::ParameterSet& ps,
                  const TemporalGraph& graph, const std::vector<NodeId>& nodes,
                  double t_n, const EncoderConfig& cfg,
                  std::mt19937_64* sampler_rng = nullptr);

}  // namespace cep3
