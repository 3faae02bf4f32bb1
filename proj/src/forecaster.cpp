#include "cep3/forecaster.hpp"

#include <cmath>
#include <stdexcept>

namespace cep3 {

using ad::ParameterSet;
using ad::Tape;
using ad::Var;

void forecaster_init(ParameterSet& ps, const ForecasterConfig& cfg) {
    if (!ps.has(std::string(kTimeEncPrefix) + ".omega"))
        ad::time_enc_init(ps, kTimeEncPrefix, cfg.d_time);
    ad::mlp_init(ps, "fc.t", cfg.hidden_dim, cfg.head_hidden, 1);
    ad::mlp_init(ps, "fc.src", cfg.hidden_dim + cfg.d_time, cfg.head_hidden, 1);
    ad::mlp_init(ps, "fc.dst", 2 * cfg.hidden_dim + cfg.d_time, cfg.head_hidden, 1);
}

void joint_head_init(ParameterSet& ps, const ForecasterConfig& cfg) {
    ad::mlp_init(ps, "fc.joint", 2 * cfg.hidden_dim + cfg.d_time, cfg.head_hidden, 1);
}

Intensities intensities(Tape& t, const ParameterSet& ps,
                        const ForecasterConfig& cfg,
                        const std::vector<Var>& states, OpCounter* counter) {
    if (states.empty()) throw DataError("intensities: empty community");
    Var H = t.stack_rows(states);                      // |C| x hidden
    Var lam = t.softplus(ad::mlp_forward(t, ps, "fc.t", H));  // |C| x 1
    Var total = t.clamp_min(t.sum_all(lam), 1e-9);
    if (counter) counter->logits += states.size();
    return {lam, total};
}

double predict_dt(double lambda_total, DtMode mode, std::mt19937_64* rng) {
    if (!(lambda_total > 0.0))
        throw std::invalid_argument("predict_dt: rate must be positive");
    if (mode == DtMode::Mean) return 1.0 / lambda_total;
    if (!rng) throw std::invalid_argument("predict_dt: sampling needs an RNG");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u;
    do { u = u01(*rng); } while (u <= 0.0);
    return -std::log(u) / lambda_total;  // inverse CDF of Exponential
}

Var source_distribution(Tape& t, const ParameterSet& ps,
                        const ForecasterConfig& cfg,
                        const std::vector<Var>& states, double dt,
                        OpCounter* counter) {
    if (states.empty()) throw DataError("source_distribution: empty community");
    if (dt < 0.0) throw std::invalid_argument("source_distribution: negative dt");
    Var phi = ad::time_enc_forward(t, ps, kTimeEncPrefix, dt);
    std::vector<Var> rows;
    rows.reserve(states.size());
    for (const Var& h : states) rows.push_back(t.concat_cols(h, phi));
    Var logits = ad::mlp_forward(t, ps, "fc.src", t.stack_rows(rows));  // |C| x 1
    if (counter) counter->logits += states.size();
    return t.softmax_rows(t.reshape(logits, 1, states.size()));
}

Var dest_distribution(Tape& t, const ParameterSet& ps,
                      const ForecasterConfig& cfg,
                      const std::vector<Var>& states, std::size_t source_index,
                      double dt, OpCounter* counter) {
    if (states.empty()) throw DataError("dest_distribution: empty community");
    if (source_index >= states.size())
        throw std::invalid_argument("dest_distribution: bad source index");
    Var phi = ad::time_enc_forward(t, ps, kTimeEncPrefix, dt);
    Var hu = states[source_index];
    std::vector<Var> rows;
    rows.reserve(states.size());
    for (const Var& h : states)
        rows.push_back(t.concat_cols(std::vector<Var>{h, hu, phi}));
    Var logits = ad::mlp_forward(t, ps, "fc.dst", t.stack_rows(rows));
    if (counter) counter->logits += states.size();
    if (cfg.mask_self_loops && states.size() > 1) {
        ad::Tensor mask(states.size(), 1, 0.0);
        mask.at(source_index, 0) = -1e30;
        logits = t.add(logits, t.constant(std::move(mask)));
    }
    return t.softmax_rows(t.reshape(logits, 1, states.size()));
}

Var joint_distribution(Tape& t, const ParameterSet& ps,
                       const ForecasterConfig& cfg,
                       const std::vector<Var>& states, double dt,
                       OpCounter* counter) {
    const std::size_t n = states.size();
    if (n == 0) throw DataError("joint_distribution: empty community");
    if (n * n > cfg.max_joint_pairs)
        throw DataError("joint_distribution: community exceeds configured pair budget");
    Var phi = ad::time_enc_forward(t, ps, kTimeEncPrefix, dt);
    std::vector<Var> rows;
    rows.reserve(n * n);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v)
            rows.push_back(t.concat_cols(std::vector<Var>{states[u], states[v], phi}));
    Var logits = ad::mlp_forward(t, ps, "fc.joint", t.stack_rows(rows));  // n^2 x 1
    if (counter) counter->logits += n * n;
    if (cfg.mask_self_loops && n > 1) {
        ad::Tensor mask(n * n, 1, 0.0);
        for (std::size_t u = 0; u < n; ++u) mask.at(u * n + u, 0) = -1e30;
        logits = t.add(logits, t.constant(std::move(mask)));
    }
    return t.softmax_rows(t.reshape(logits, 1, n * n));
}

std::size_t argmax_lowest(const std::vector<double>& xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[best]) best = i;
    return best;
}

}  // namespace cep3
