#include "cep3/model.hpp"

#include <algorithm>
#include <cmath>

namespace cep3 {

using ad::ParameterSet;
using ad::Tape;
using ad::Var;

LossTerms step_loss(double lambda_total, double dt_true, double p_u, double p_v) {
    LossTerms lt;
    const double lam = std::max(lambda_total, 1e-9);
    lt.time_nll = -std::log(lam) + dt_true * lam;
    lt.entity_nll = -std::log(std::max(p_u, 1e-12)) - std::log(std::max(p_v, 1e-12));
    lt.total = lt.time_nll + lt.entity_nll;
    lt.per_step.emplace_back(lt.time_nll, lt.entity_nll);
    return lt;
}

std::vector<ForecastStep> rollout(ForecastModel& model, std::size_t steps,
                                  DtMode mode, std::mt19937_64* rng) {
    std::vector<ForecastStep> out;
    out.reserve(steps);
    for (std::size_t i = 0; i < steps; ++i) out.push_back(model.predict(mode, rng));
    return out;
}

Cep3Model::Cep3Model(Cep3Config cfg, std::uint64_t seed, std::size_t feature_dim)
    : cfg_(std::move(cfg)), feature_dim_(feature_dim), ps_(seed) {
    cfg_.sync();
    encoder_init(ps_, cfg_.enc, feature_dim_);
    forecaster_init(ps_, cfg_.fc);
    if (!cfg_.hierarchical) joint_head_init(ps_, cfg_.fc);
    update_net_init(ps_, cfg_.upd);
}

namespace {
std::size_t index_in(const std::vector<NodeId>& xs, NodeId v) {
    auto it = std::lower_bound(xs.begin(), xs.end(), v);
    if (it == xs.end() || *it != v)
        throw DataError("event endpoint outside the community");
    return static_cast<std::size_t>(it - xs.begin());
}
}  // namespace

Var Cep3Model::window_loss(Tape& t, const Window& w, LossTerms* terms) const {
    if (!graph_) throw DataError("Cep3Model: no graph attached");
    if (w.truth.empty()) throw DataError("Cep3Model: empty window");

    NodeStates enc = encode(t, ps_, *graph_, w.community, w.t_n, cfg_.enc);
    std::vector<Var> states;
    states.reserve(w.community.size());
    for (NodeId v : w.community) states.push_back(enc.at(v));

    RolloutGraph roll = init_rollout_graph(*graph_, w.community, cfg_.rollout_hops);

    Var total = t.constant_scalar(0.0);
    double prev_t = w.t_n;
    double first_dt = -1.0;
    for (const Event& ev : w.truth) {
        const double dt_true = ev.time - prev_t;
        if (first_dt < 0.0) first_dt = dt_true;
        const std::size_t iu = index_in(w.community, ev.source);
        const std::size_t iv = index_in(w.community, ev.dest);

        Intensities lam = intensities(t, ps_, cfg_.fc, states, &counter_);
        Var time_nll = t.add(t.neg(t.log(lam.total)), t.scale(lam.total, dt_true));

        Var entity_nll;
        if (cfg_.hierarchical) {
            Var pu = source_distribution(t, ps_, cfg_.fc, states, dt_true, &counter_);
            Var pv = dest_distribution(t, ps_, cfg_.fc, states, iu, dt_true, &counter_);
            Var lpu = t.log(t.clamp_min(t.pick(pu, 0, iu), 1e-12));
            Var lpv = t.log(t.clamp_min(t.pick(pv, 0, iv), 1e-12));
            entity_nll = t.neg(t.add(lpu, lpv));
        } else {
            Var pj = joint_distribution(t, ps_, cfg_.fc, states, dt_true, &counter_);
            const std::size_t pair = iu * w.community.size() + iv;
            entity_nll = t.neg(t.log(t.clamp_min(t.pick(pj, 0, pair), 1e-12)));
        }

        if (terms) {
            terms->time_nll += t.value(time_nll).item();
            terms->entity_nll += t.value(entity_nll).item();
            terms->per_step.emplace_back(t.value(time_nll).item(),
                                         t.value(entity_nll).item());
        }
        total = t.add(total, t.add(time_nll, entity_nll));

        // Teacher forcing: absorb the ground-truth event.
        apply_event(roll, ev.source, ev.dest);
        const double dt_gru = cfg_.strict_first_dt ? first_dt : dt_true;
        if (cfg_.ar == Cep3Config::ArMode::Full) {
            states = propagate_update(t, ps_, cfg_.upd, roll, states, dt_gru);
        } else {
            states = incident_only_update(t, ps_, cfg_.upd, roll, states, dt_gru,
                                          ev.source, ev.dest);
        }
        prev_t = ev.time;
    }
    if (terms) terms->total = terms->time_nll + terms->entity_nll;
    return total;
}

std::vector<Var> Cep3Model::states_from_values(Tape& t) const {
    std::vector<Var> states;
    states.reserve(state_vals_.size());
    for (const auto& h : state_vals_) states.push_back(t.constant(h));
    return states;
}

void Cep3Model::absorb(const std::vector<Var>& updated, const Tape& t) {
    for (std::size_t i = 0; i < updated.size(); ++i)
        state_vals_[i] = t.value(updated[i]);
}

void Cep3Model::begin(const Window& w) {
    if (!graph_) throw DataError("Cep3Model: no graph attached");
    candidates_ = w.community;
    std::sort(candidates_.begin(), candidates_.end());
    Tape t;
    NodeStates enc = encode(t, ps_, *graph_, candidates_, w.t_n, cfg_.enc);
    state_vals_.clear();
    for (NodeId v : candidates_) state_vals_.push_back(t.value(enc.at(v)));
    roll_ = std::make_unique<RolloutGraph>(
        init_rollout_graph(*graph_, candidates_, cfg_.rollout_hops));
    current_t_ = w.t_n;
    first_dt_ = -1.0;
}

void Cep3Model::advance(NodeId u, NodeId v, double dt, double t_new) {
    apply_event(*roll_, u, v);
    if (first_dt_ < 0.0) first_dt_ = dt;
    const double dt_gru = cfg_.strict_first_dt ? first_dt_ : dt;
    Tape t;
    auto states = states_from_values(t);
    auto updated = cfg_.ar == Cep3Config::ArMode::Full
                       ? propagate_update(t, ps_, cfg_.upd, *roll_, states, dt_gru)
                       : incident_only_update(t, ps_, cfg_.upd, *roll_, states,
                                              dt_gru, u, v);
    absorb(updated, t);
    current_t_ = t_new;
}

StepProbe Cep3Model::observe(const Event& truth) {
    const double dt_true = truth.time - current_t_;
    const std::size_t iu = index_in(candidates_, truth.source);
    const std::size_t iv = index_in(candidates_, truth.dest);
    Tape t;
    auto states = states_from_values(t);
    Intensities lam = intensities(t, ps_, cfg_.fc, states, &counter_);
    StepProbe probe;
    probe.lambda_total = t.value(lam.total).item();
    probe.dt_pred = 1.0 / probe.lambda_total;
    if (cfg_.hierarchical) {
        Var pu = source_distribution(t, ps_, cfg_.fc, states, dt_true, &counter_);
        Var pv = dest_distribution(t, ps_, cfg_.fc, states, iu, dt_true, &counter_);
        probe.p_source = t.value(pu).v[iu];
        probe.p_dest = t.value(pv).v[iv];
    } else {
        Var pj = joint_distribution(t, ps_, cfg_.fc, states, dt_true, &counter_);
        const auto& j = t.value(pj).v;
        const std::size_t n = candidates_.size();
        double pu = 0.0;
        for (std::size_t v = 0; v < n; ++v) pu += j[iu * n + v];
        probe.p_source = pu;
        probe.p_dest = pu > 0.0 ? j[iu * n + iv] / pu : 0.0;
    }
    advance(truth.source, truth.dest, dt_true, truth.time);
    return probe;
}

ForecastStep Cep3Model::predict(DtMode mode, std::mt19937_64* rng) {
    Tape t;
    auto states = states_from_values(t);
    Intensities lam = intensities(t, ps_, cfg_.fc, states, &counter_);
    const double lam_total = t.value(lam.total).item();
    const double dt = predict_dt(lam_total, mode, rng);

    ForecastStep step;
    step.dt = dt;
    step.t_abs = current_t_ + dt;
    step.lambda_total = lam_total;
    const std::size_t n = candidates_.size();
    if (cfg_.hierarchical) {
        Var pu = source_distribution(t, ps_, cfg_.fc, states, dt, &counter_);
        step.p_source = t.value(pu).v;
        const std::size_t iu = argmax_lowest(step.p_source);
        Var pv = dest_distribution(t, ps_, cfg_.fc, states, iu, dt, &counter_);
        step.p_dest = t.value(pv).v;
        const std::size_t iv = argmax_lowest(step.p_dest);
        step.source = candidates_[iu];
        step.dest = candidates_[iv];
    } else {
        Var pj = joint_distribution(t, ps_, cfg_.fc, states, dt, &counter_);
        const auto& j = t.value(pj).v;
        const std::size_t best = argmax_lowest(j);
        const std::size_t iu = best / n, iv = best % n;
        step.source = candidates_[iu];
        step.dest = candidates_[iv];
        step.p_source.assign(n, 0.0);
        step.p_dest.assign(n, 0.0);
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v) step.p_source[u] += j[u * n + v];
        const double pu = std::max(step.p_source[iu], 1e-300);
        for (std::size_t v = 0; v < n; ++v) step.p_dest[v] = j[iu * n + v] / pu;
    }
    advance(step.source, step.dest, dt, step.t_abs);
    return step;
}

std::vector<double> Cep3Model::current_source_probs(double dt) {
    Tape t;
    auto states = states_from_values(t);
    return t.value(source_distribution(t, ps_, cfg_.fc, states, dt, &counter_)).v;
}

std::vector<double> Cep3Model::current_dest_probs(std::size_t source_index,
                                                  double dt) {
    Tape t;
    auto states = states_from_values(t);
    return t.value(
        dest_distribution(t, ps_, cfg_.fc, states, source_index, dt, &counter_)).v;
}

std::vector<double> Cep3Model::current_joint_probs(double dt) {
    Tape t;
    auto states = states_from_values(t);
    return t.value(joint_distribution(t, ps_, cfg_.fc, states, dt, &counter_)).v;
}

double Cep3Model::current_lambda_total() {
    Tape t;
    auto states = states_from_values(t);
    return t.value(intensities(t, ps_, cfg_.fc, states, &counter_).total).item();
}

}  // namespace cep3
