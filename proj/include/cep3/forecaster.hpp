#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cep3/encoder.hpp"

namespace cep3 {

struct ForecasterConfig {
    std::size_t hidden_dim = 100;   // node-state dimension (encoder output)
    std::size_t head_hidden = 50;
    std::size_t d_time = 16;
    bool mask_self_loops = false;
    std::size_t max_joint_pairs = 1u << 20;  // capacity guard for the joint head
};

// Logit-evaluation counter; distinguishes the O(|C|) chain from the
// O(|C|^2) joint head independently of wall clock.
struct OpCounter {
    std::uint64_t logits = 0;
};

struct ForecastStep {
    double dt = 0.0;
    double t_abs = 0.0;
    NodeId source = 0;
    NodeId dest = 0;
    double lambda_total = 0.0;
    std::vector<double> p_source;  // over the community, candidate order
    std::vector<double> p_dest;
};

void forecaster_init(ad::ParameterSet& ps, const ForecasterConfig& cfg);
void joint_head_init(ad::ParameterSet& ps, const ForecasterConfig& cfg);

// Per-node softplus intensities and their sum (clamped to >= 1e-9).
struct Intensities {
    ad::Var per_node;      // |C| x 1
    ad::Var total;         // 1 x 1
};
Intensities intensities(ad::Tape& t, const ad::ParameterSet& ps,
                        const ForecasterConfig& cfg,
                        const std::vector<ad::Var>& states,
                        OpCounter* counter = nullptr);

enum class DtMode { Mean, Sample };
double predict_dt(double lambda_total, DtMode mode, std::mt19937_64* rng = nullptr);

// p(u | dt): softmax over the community of MLP_src(h_u || phi(dt)).
ad::Var source_distribution(ad::Tape& t, const ad::ParameterSet& ps,
                            const ForecasterConfig& cfg,
                            const std::vector<ad::Var>& states, double dt,
                            OpCounter* counter = nullptr);

// p(v | dt, u): softmax of MLP_dst(h_v || h_u || phi(dt)).
ad::Var dest_distribution(ad::Tape& t, const ad::ParameterSet& ps,
                          const ForecasterConfig& cfg,
                          const std::vector<ad::Var>& states,
                          std::size_t source_index, double dt,
                          OpCounter* counter = nullptr);

// Joint softmax over all |C|^2 ordered pairs, row-major (u * |C| + v).
ad::Var joint_distribution(ad::Tape& t, const ad::ParameterSet& ps,
                           const ForecasterConfig& cfg,
                           const std::vector<ad::Var>& states, double dt,
                           OpCounter* counter = nullptr);

// Lowest-index winner on ties.
std::size_t argmax_lowest(const std::vector<double>& xs);

}  // namespace cep3
