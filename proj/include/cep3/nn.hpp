#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "cep3/tensor.hpp"

namespace cep3::ad {

enum class Init { Zeros, UniformFanIn, LogUniformFreq };

// Named trainable tensors plus their Adam moments and the seeded RNG that
// initialized them. Read-only once training starts handing snapshots to
// concurrent tapes.
class ParameterSet {
  public:
    explicit ParameterSet(std::uint64_t seed = 0) : rng_(seed), seed_(seed) {}

    Tensor& add(const std::string& name, std::size_t rows, std::size_t cols,
                Init init);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get_mut(const std::string& name);

    const std::map<std::string, Tensor>& all() const { return params_; }
    std::map<std::string, Tensor>& all_mut() { return params_; }
    std::uint64_t seed() const { return seed_; }

    void save(const std::string& blob_path, const std::string& manifest_path) const;
    static ParameterSet load(const std::string& blob_path,
                             const std::string& manifest_path);

    // Adam state, owned here so checkpoints can be resumed cleanly.
    std::map<std::string, Tensor> adam_m;
    std::map<std::string, Tensor> adam_v;
    std::int64_t adam_step_count = 0;

  private:
    std::map<std::string, Tensor> params_;
    std::mt19937_64 rng_;
    std::uint64_t seed_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(ParameterSet& ps, const GradMap& grads, const AdamConfig& cfg);

// Rescales all gradients in place when the global norm exceeds max_norm.
double clip_global_norm(GradMap& grads, double max_norm);

void merge_grads(GradMap& into, const GradMap& from);

// --- layers ------------------------------------------------------------
// All layers register their weights under a dotted prefix in a ParameterSet
// and run their forward pass on a caller-supplied tape.

// Two-layer MLP, tanh hidden, linear output: y = tanh(x W0 + b0) W1 + b1.
void mlp_init(ParameterSet& ps, const std::string& prefix, std::size_t in,
              std::size_t hidden, std::size_t out);
Var mlp_forward(Tape& t, const ParameterSet& ps, const std::string& prefix, Var x);

// Standard GRU cell; the candidate gate sees [x || r*h].
void gru_init(ParameterSet& ps, const std::string& prefix, std::size_t dx,
              std::size_t dh);
Var gru_forward(Tape& t, const ParameterSet& ps, const std::string& prefix,
                Var x, Var h_prev);

// Multi-head scaled dot-product attention with a 1xDq query against N keys.
// Head outputs are concatenated; heads must divide d_model.
void mha_init(ParameterSet& ps, const std::string& prefix, std::size_t dq,
              std::size_t dkv, std::size_t d_model, std::size_t heads);
Var mha_forward(Tape& t, const ParameterSet& ps, const std::string& prefix,
                Var q, Var keys, Var values, std::size_t heads,
                std::size_t d_model);

// Learnable cosine time encoding phi(dt) = cos(omega*dt + b).
void time_enc_init(ParameterSet& ps, const std::string& prefix, std::size_t d_time);
Var time_enc_forward(Tape& t, const ParameterSet& ps, const std::string& prefix,
                     double dt);

}  // namespace cep3::ad
