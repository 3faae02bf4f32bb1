#include "cep3/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace cep3 {

using ad::ParameterSet;
using ad::Tape;
using ad::Var;

namespace {
std::size_t index_in(const std::vector<NodeId>& xs, NodeId v) {
    auto it = std::lower_bound(xs.begin(), xs.end(), v);
    if (it == xs.end() || *it != v)
        throw DataError("baseline: node outside the community");
    return static_cast<std::size_t>(it - xs.begin());
}
}  // namespace

// --- Poisson --------------------------------------------------------------

double PoissonModel::rate(NodeId u, NodeId v) const {
    auto it = rates.find({u, v});
    return it == rates.end() ? default_rate : it->second;
}

double PoissonModel::lambda_total() const {
    const std::size_t n = community.size();
    double s = default_rate * static_cast<double>(n * n - rates.size());
    for (const auto& [pair, r] : rates) s += r;
    return s;
}

PoissonModel fit_poisson(const std::vector<Event>& train, double t_span,
                         const std::vector<NodeId>& community) {
    if (!(t_span > 0.0)) throw DataError("fit_poisson: zero timespan");
    PoissonModel m;
    m.community = community;
    std::sort(m.community.begin(), m.community.end());
    std::map<PairKey, std::size_t> counts;
    for (const Event& e : train) counts[{e.source, e.dest}] += 1;
    for (const auto& [pair, c] : counts)
        m.rates[pair] = static_cast<double>(c) / t_span;
    const double n = static_cast<double>(m.community.size());
    m.default_rate = 0.5 / (n * n * t_span);
    return m;
}

void PoissonForecast::begin(const Window& w) { current_t_ = w.t_n; }

StepProbe PoissonForecast::observe(const Event& truth) {
    StepProbe p;
    p.lambda_total = m_.lambda_total();
    p.dt_pred = 1.0 / p.lambda_total;
    double row = 0.0;
    for (NodeId v : m_.community) row += m_.rate(truth.source, v);
    p.p_source = row / p.lambda_total;
    p.p_dest = row > 0.0 ? m_.rate(truth.source, truth.dest) / row : 0.0;
    current_t_ = truth.time;
    return p;
}

ForecastStep PoissonForecast::predict(DtMode mode, std::mt19937_64* rng) {
    const double lam = m_.lambda_total();
    ForecastStep s;
    s.lambda_total = lam;
    s.dt = predict_dt(lam, mode, rng);
    s.t_abs = current_t_ + s.dt;
    const std::size_t n = m_.community.size();
    s.p_source.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (NodeId v : m_.community)
            s.p_source[i] += m_.rate(m_.community[i], v);
        s.p_source[i] /= lam;
    }
    const std::size_t iu = argmax_lowest(s.p_source);
    s.source = m_.community[iu];
    double row = s.p_source[iu] * lam;
    s.p_dest.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        s.p_dest[j] = row > 0.0 ? m_.rate(s.source, m_.community[j]) / row : 0.0;
    s.dest = m_.community[argmax_lowest(s.p_dest)];
    current_t_ = s.t_abs;
    return s;
}

// --- Hawkes ----------------------------------------------------------------

HawkesPair HawkesModel::pair(NodeId u, NodeId v) const {
    auto it = pairs.find({u, v});
    if (it != pairs.end()) return it->second;
    return {default_mu, 0.0};
}

double hawkes_pair_nll(const std::vector<double>& times, double mu, double alpha,
                       double beta, double t_end) {
    double nll = mu * t_end;
    double a = 0.0;        // sum of exp(-beta (t_i - t_j)) over j < i
    double prev = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0) a = std::exp(-beta * (times[i] - prev)) * (a + 1.0);
        prev = times[i];
        const double lam = mu + alpha * beta * a;
        nll -= std::log(std::max(lam, 1e-300));
        nll += alpha * (1.0 - std::exp(-beta * (t_end - times[i])));
    }
    return nll;
}

namespace {

struct HawkesGrad {
    double d_mu = 0.0;
    double d_alpha = 0.0;
};

HawkesGrad hawkes_pair_grad(const std::vector<double>& times, double mu,
                            double alpha, double beta, double t_end) {
    HawkesGrad g;
    g.d_mu = t_end;
    double a = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0) a = std::exp(-beta * (times[i] - prev)) * (a + 1.0);
        prev = times[i];
        const double lam = std::max(mu + alpha * beta * a, 1e-300);
        g.d_mu -= 1.0 / lam;
        g.d_alpha += -beta * a / lam + (1.0 - std::exp(-beta * (t_end - times[i])));
    }
    return g;
}

// Projected gradient descent with backtracking on the (convex) pair NLL.
HawkesPair fit_pair(const std::vector<double>& times, double beta, double t_end,
                    bool fix_alpha_zero, std::size_t max_iters, bool* converged) {
    const double n = static_cast<double>(times.size());
    double mu = std::max(0.5 * n / t_end, 1e-8);
    double alpha = fix_alpha_zero ? 0.0 : 0.1;
    auto project = [&](double& m, double& a) {
        m = std::max(m, 1e-12);
        a = fix_alpha_zero ? 0.0 : std::clamp(a, 0.0, 0.999 * beta);
    };
    double nll = hawkes_pair_nll(times, mu, alpha, beta, t_end);
    *converged = false;
    for (std::size_t it = 0; it < max_iters; ++it) {
        HawkesGrad g = hawkes_pair_grad(times, mu, alpha, beta, t_end);
        if (fix_alpha_zero) g.d_alpha = 0.0;
        double step = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            double m2 = mu - step * g.d_mu;
            double a2 = alpha - step * g.d_alpha;
            project(m2, a2);
            const double nll2 = hawkes_pair_nll(times, m2, a2, beta, t_end);
            if (nll2 < nll) {
                const double moved = std::abs(m2 - mu) + std::abs(a2 - alpha);
                mu = m2;
                alpha = a2;
                if (nll - nll2 < 1e-13 * (1.0 + std::abs(nll)) && moved < 1e-12) {
                    *converged = true;
                    return {mu, alpha};
                }
                nll = nll2;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {  // no descent direction left at machine precision
            *converged = true;
            return {mu, alpha};
        }
    }
    return {mu, alpha};
}

}  // namespace

HawkesModel fit_hawkes(const std::vector<Event>& train, double t_span,
                       const std::vector<NodeId>& community, double beta,
                       bool fix_alpha_zero, std::size_t max_iters) {
    if (!(t_span > 0.0)) throw DataError("fit_hawkes: zero timespan");
    if (train.empty()) throw DataError("fit_hawkes: empty training stream");
    HawkesModel m;
    m.community = community;
    std::sort(m.community.begin(), m.community.end());
    m.beta = beta;
    const double t0 = train.front().time;
    std::map<PairKey, std::vector<double>> times;
    for (const Event& e : train) times[{e.source, e.dest}].push_back(e.time - t0);
    for (auto& [pair, ts] : times) {
        bool conv = false;
        m.pairs[pair] = fit_pair(ts, beta, t_span, fix_alpha_zero, max_iters, &conv);
        if (!conv) m.converged = false;
    }
    const double n = static_cast<double>(m.community.size());
    m.default_mu = 0.5 / (n * n * t_span);
    if (!m.converged)
        std::cerr << "fit_hawkes: some pairs stopped at the iteration cap; "
                     "best iterates kept\n";
    return m;
}

void HawkesForecast::begin(const Window& w) {
    excitation_.clear();
    current_t_ = w.t_n;
}

void HawkesForecast::decay_to(double t) {
    const double dt = t - current_t_;
    if (dt <= 0.0) return;
    const double f = std::exp(-m_.beta * dt);
    for (auto& [pair, s] : excitation_) s *= f;
    current_t_ = t;
}

double HawkesForecast::pair_intensity(NodeId u, NodeId v) const {
    HawkesPair p = m_.pair(u, v);
    double s = 0.0;
    auto it = excitation_.find({u, v});
    if (it != excitation_.end()) s = it->second;
    return p.mu + p.alpha * m_.beta * s;
}

double HawkesForecast::total_intensity() const {
    double sum = 0.0;
    for (NodeId u : m_.community)
        for (NodeId v : m_.community) sum += pair_intensity(u, v);
    return std::max(sum, 1e-12);
}

StepProbe HawkesForecast::observe(const Event& truth) {
    decay_to(truth.time);
    StepProbe p;
    p.lambda_total = total_intensity();
    p.dt_pred = 1.0 / p.lambda_total;
    double row = 0.0;
    for (NodeId v : m_.community) row += pair_intensity(truth.source, v);
    p.p_source = row / p.lambda_total;
    p.p_dest = row > 0.0 ? pair_intensity(truth.source, truth.dest) / row : 0.0;
    excitation_[{truth.source, truth.dest}] += 1.0;
    return p;
}

ForecastStep HawkesForecast::predict(DtMode mode, std::mt19937_64* rng) {
    const double lam = total_intensity();
    ForecastStep s;
    s.lambda_total = lam;
    s.dt = predict_dt(lam, mode, rng);
    decay_to(current_t_ + s.dt);
    s.t_abs = current_t_;
    const std::size_t n = m_.community.size();
    const double lam_now = total_intensity();
    s.p_source.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (NodeId v : m_.community)
            s.p_source[i] += pair_intensity(m_.community[i], v);
        s.p_source[i] /= lam_now;
    }
    const std::size_t iu = argmax_lowest(s.p_source);
    s.source = m_.community[iu];
    const double row = s.p_source[iu] * lam_now;
    s.p_dest.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        s.p_dest[j] =
            row > 0.0 ? pair_intensity(s.source, m_.community[j]) / row : 0.0;
    s.dest = m_.community[argmax_lowest(s.p_dest)];
    excitation_[{s.source, s.dest}] += 1.0;
    return s;
}

// --- RMTPP -------------------------------------------------------------

namespace {

// e^z * E1(z) for z > 0, series for small z, modified Lentz continued
// fraction otherwise.
double expz_e1(double z) {
    if (z <= 0.0) throw std::invalid_argument("expz_e1: z must be positive");
    if (z <= 1.0) {
        const double gamma = 0.5772156649015328606;
        double sum = -gamma - std::log(z);
        double term = 1.0;
        for (int k = 1; k <= 40; ++k) {
            term *= -z / k;
            sum -= term / k;
        }
        return std::exp(z) * sum;
    }
    // continued fraction: E1(z) = e^{-z} / (z + 1/(1 + 1/(z + 2/(1 + ...))))
    const double tiny = 1e-300;
    double b = z + 1.0, c = 1.0 / tiny, d = 1.0 / b, f = d;
    for (int i = 1; i <= 200; ++i) {
        const double a = -static_cast<double>(i) * i;
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return f;  // e^z E1(z) = f since the e^{-z} cancels
}

constexpr double kExpCap = 30.0;  // logits above this saturate the intensity

}  // namespace

RmtppModel::RmtppModel(RmtppConfig cfg, std::vector<NodeId> community,
                       std::uint64_t seed)
    : cfg_(cfg), community_(std::move(community)), ps_(seed) {
    std::sort(community_.begin(), community_.end());
    const std::size_t n = community_.size();
    if (!cfg_.hierarchical && n * n > cfg_.max_pairs)
        throw DataError("rmtpp: community exceeds configured pair budget");
    ps_.add("emb", n, cfg_.embed_dim, ad::Init::UniformFanIn);
    ad::gru_init(ps_, "gru", 2 * cfg_.embed_dim + 1, cfg_.hidden_dim);
    ps_.add("time.v", cfg_.hidden_dim, 1, ad::Init::UniformFanIn);
    ps_.add("time.b", 1, 1, ad::Init::Zeros);
    ps_.add("time.w", 1, 1, ad::Init::Zeros);  // softplus(0)+1e-3 ~ 0.694
    if (cfg_.hierarchical) {
        ps_.add("src.w", cfg_.hidden_dim, n, ad::Init::UniformFanIn);
        ps_.add("src.b", 1, n, ad::Init::Zeros);
        ps_.add("dst.w", cfg_.hidden_dim + cfg_.embed_dim, n, ad::Init::UniformFanIn);
        ps_.add("dst.b", 1, n, ad::Init::Zeros);
    } else {
        ps_.add("marker.w", cfg_.hidden_dim, n * n, ad::Init::UniformFanIn);
        ps_.add("marker.b", 1, n * n, ad::Init::Zeros);
    }
    h_state_ = ad::Tensor(1, cfg_.hidden_dim, 0.0);
}

Var RmtppModel::input_row(Tape& t, NodeId u, NodeId v, double dt) const {
    Var emb = t.param(ps_, "emb");
    Var eu = t.row(emb, index_in(community_, u));
    Var ev = t.row(emb, index_in(community_, v));
    Var d = t.constant(ad::Tensor::scalar(dt));
    return t.concat_cols(std::vector<Var>{eu, ev, d});
}

std::pair<Var, Var> RmtppModel::time_params(Tape& t, Var h) const {
    Var a = t.add(t.matmul(h, t.param(ps_, "time.v")), t.param(ps_, "time.b"));
    a = t.clamp_max(a, kExpCap);
    Var w = t.add_scalar(t.softplus(t.param(ps_, "time.w")), 1e-3);
    return {a, w};
}

double RmtppModel::expected_dt(double a, double w) const {
    const double z = std::exp(a) / w;
    if (z > 1e15) return std::exp(-a);  // w -> 0 limit: plain exponential mean
    return expz_e1(z) / w;
}

Var RmtppModel::window_loss(Tape& t, const Window& w, LossTerms* terms) const {
    if (w.truth.empty()) throw DataError("rmtpp: empty window");
    const std::size_t n = community_.size();
    Var h = t.constant(ad::Tensor(1, cfg_.hidden_dim, 0.0));
    Var total = t.constant_scalar(0.0);
    double prev_t = w.t_n;
    for (const Event& ev : w.truth) {
        const double dt = ev.time - prev_t;
        const std::size_t iu = index_in(community_, ev.source);
        const std::size_t iv = index_in(community_, ev.dest);

        auto [a, wv] = time_params(t, h);
        // -log f(dt) for lambda*(d) = exp(a + w d)
        Var awd = t.clamp_max(t.add(a, t.scale(wv, dt)), kExpCap);
        Var e_awd = t.exp(awd);
        Var e_a = t.exp(a);
        Var time_nll = t.add(t.neg(awd), t.mul(t.sub(e_awd, e_a),
                                               t.exp(t.neg(t.log(wv)))));

        Var entity_nll;
        if (cfg_.hierarchical) {
            Var ls = t.add(t.matmul(h, t.param(ps_, "src.w")), t.param(ps_, "src.b"));
            Var ps_dist = t.softmax_rows(ls);
            Var eu = t.row(t.param(ps_, "emb"), iu);
            Var ld = t.add(t.matmul(t.concat_cols(h, eu), t.param(ps_, "dst.w")),
                           t.param(ps_, "dst.b"));
            Var pd_dist = t.softmax_rows(ld);
            counter_.logits += 2 * n;
            entity_nll = t.neg(
                t.add(t.log(t.clamp_min(t.pick(ps_dist, 0, iu), 1e-12)),
                      t.log(t.clamp_min(t.pick(pd_dist, 0, iv), 1e-12))));
        } else {
            Var lm = t.add(t.matmul(h, t.param(ps_, "marker.w")),
                           t.param(ps_, "marker.b"));
            Var pm = t.softmax_rows(lm);
            counter_.logits += n * n;
            entity_nll = t.neg(
                t.log(t.clamp_min(t.pick(pm, 0, iu * n + iv), 1e-12)));
        }
        if (terms) {
            terms->time_nll += t.value(time_nll).item();
            terms->entity_nll += t.value(entity_nll).item();
            terms->per_step.emplace_back(t.value(time_nll).item(),
                                         t.value(entity_nll).item());
        }
        total = t.add(total, t.add(time_nll, entity_nll));
        h = ad::gru_forward(t, ps_, "gru", input_row(t, ev.source, ev.dest, dt), h);
        prev_t = ev.time;
    }
    if (terms) terms->total = terms->time_nll + terms->entity_nll;
    return total;
}

void RmtppModel::begin(const Window& w) {
    h_state_ = ad::Tensor(1, cfg_.hidden_dim, 0.0);
    current_t_ = w.t_n;
}

StepProbe RmtppModel::observe(const Event& truth) {
    const double dt = truth.time - current_t_;
    const std::size_t n = community_.size();
    const std::size_t iu = index_in(community_, truth.source);
    const std::size_t iv = index_in(community_, truth.dest);
    Tape t;
    Var h = t.constant(h_state_);
    auto [a, wv] = time_params(t, h);
    StepProbe p;
    const double av = t.value(a).item();
    const double wval = t.value(wv).item();
    p.lambda_total = std::exp(av);
    p.dt_pred = expected_dt(av, wval);
    if (cfg_.hierarchical) {
        Var ls = t.softmax_rows(
            t.add(t.matmul(h, t.param(ps_, "src.w")), t.param(ps_, "src.b")));
        Var eu = t.row(t.param(ps_, "emb"), iu);
        Var ld = t.softmax_rows(
            t.add(t.matmul(t.concat_cols(h, eu), t.param(ps_, "dst.w")),
                  t.param(ps_, "dst.b")));
        counter_.logits += 2 * n;
        p.p_source = t.value(ls).v[iu];
        p.p_dest = t.value(ld).v[iv];
    } else {
        Var pm = t.softmax_rows(t.add(t.matmul(h, t.param(ps_, "marker.w")),
                                      t.param(ps_, "marker.b")));
        counter_.logits += n * n;
        const auto& j = t.value(pm).v;
        double pu = 0.0;
        for (std::size_t v = 0; v < n; ++v) pu += j[iu * n + v];
        p.p_source = pu;
        p.p_dest = pu > 0.0 ? j[iu * n + iv] / pu : 0.0;
    }
    Var h2 = ad::gru_forward(t, ps_, "gru",
                             input_row(t, truth.source, truth.dest, dt), h);
    h_state_ = t.value(h2);
    current_t_ = truth.time;
    return p;
}

ForecastStep RmtppModel::predict(DtMode mode, std::mt19937_64* rng) {
    const std::size_t n = community_.size();
    Tape t;
    Var h = t.constant(h_state_);
    auto [a, wv] = time_params(t, h);
    const double av = t.value(a).item();
    const double wval = t.value(wv).item();
    ForecastStep s;
    s.lambda_total = std::exp(av);
    if (mode == DtMode::Mean) {
        s.dt = expected_dt(av, wval);
    } else {
        if (!rng) throw std::invalid_argument("rmtpp: sampling needs an RNG");
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double u;
        do { u = u01(*rng); } while (u <= 0.0);
        const double e = -std::log(u);
        s.dt = (std::log(std::exp(av) + wval * e) - av) / wval;
    }
    s.t_abs = current_t_ + s.dt;
    if (cfg_.hierarchical) {
        Var ls = t.softmax_rows(
            t.add(t.matmul(h, t.param(ps_, "src.w")), t.param(ps_, "src.b")));
        s.p_source = t.value(ls).v;
        const std::size_t iu = argmax_lowest(s.p_source);
        Var eu = t.row(t.param(ps_, "emb"), iu);
        Var ld = t.softmax_rows(
            t.add(t.matmul(t.concat_cols(h, eu), t.param(ps_, "dst.w")),
                  t.param(ps_, "dst.b")));
        s.p_dest = t.value(ld).v;
        counter_.logits += 2 * n;
        s.source = community_[iu];
        s.dest = community_[argmax_lowest(s.p_dest)];
    } else {
        Var pm = t.softmax_rows(t.add(t.matmul(h, t.param(ps_, "marker.w")),
                                      t.param(ps_, "marker.b")));
        counter_.logits += n * n;
        const auto& j = t.value(pm).v;
        const std::size_t best = argmax_lowest(j);
        s.source = community_[best / n];
        s.dest = community_[best % n];
        s.p_source.assign(n, 0.0);
        s.p_dest.assign(n, 0.0);
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v) s.p_source[u] += j[u * n + v];
        const double pu = std::max(s.p_source[best / n], 1e-300);
        for (std::size_t v = 0; v < n; ++v) s.p_dest[v] = j[(best / n) * n + v] / pu;
    }
    Var h2 = ad::gru_forward(t, ps_, "gru", input_row(t, s.source, s.dest, s.dt), h);
    h_state_ = t.value(h2);
    current_t_ = s.t_abs;
    return s;
}

// --- GRU + Gaussian -------------------------------------------------------

GruGaussianModel::GruGaussianModel(GruGaussianConfig cfg,
                                   std::vector<NodeId> community,
                                   std::uint64_t seed)
    : cfg_(cfg), community_(std::move(community)), ps_(seed) {
    std::sort(community_.begin(), community_.end());
    const std::size_t n = community_.size();
    ps_.add("emb", n, cfg_.embed_dim, ad::Init::UniformFanIn);
    ad::gru_init(ps_, "gru", 2 * cfg_.embed_dim + 1, cfg_.hidden_dim);
    ps_.add("mu.w", cfg_.hidden_dim, 1, ad::Init::UniformFanIn);
    ps_.add("mu.b", 1, 1, ad::Init::Zeros);
    ps_.add("lv.w", cfg_.hidden_dim, 1, ad::Init::UniformFanIn);
    ps_.add("lv.b", 1, 1, ad::Init::Zeros);
    ps_.add("src.w", cfg_.hidden_dim, n, ad::Init::UniformFanIn);
    ps_.add("src.b", 1, n, ad::Init::Zeros);
    ps_.add("dst.w", cfg_.hidden_dim + cfg_.embed_dim, n, ad::Init::UniformFanIn);
    ps_.add("dst.b", 1, n, ad::Init::Zeros);
    h_state_ = ad::Tensor(1, cfg_.hidden_dim, 0.0);
}

Var GruGaussianModel::input_row(Tape& t, NodeId u, NodeId v, double dt) const {
    Var emb = t.param(ps_, "emb");
    Var eu = t.row(emb, index_in(community_, u));
    Var ev = t.row(emb, index_in(community_, v));
    return t.concat_cols(std::vector<Var>{eu, ev,
                                          t.constant(ad::Tensor::scalar(dt))});
}

Var GruGaussianModel::window_loss(Tape& t, const Window& w,
                                  LossTerms* terms) const {
    if (w.truth.empty()) throw DataError("gru_gaussian: empty window");
    Var h = t.constant(ad::Tensor(1, cfg_.hidden_dim, 0.0));
    Var total = t.constant_scalar(0.0);
    double prev_t = w.t_n;
    for (const Event& ev : w.truth) {
        const double dt = ev.time - prev_t;
        const std::size_t iu = index_in(community_, ev.source);
        const std::size_t iv = index_in(community_, ev.dest);

        Var mean = t.add(t.matmul(h, t.param(ps_, "mu.w")), t.param(ps_, "mu.b"));
        Var logvar = t.clamp_max(
            t.add(t.matmul(h, t.param(ps_, "lv.w")), t.param(ps_, "lv.b")), kExpCap);
        Var diff = t.add_scalar(t.neg(mean), dt);
        Var time_nll = t.scale(
            t.add(logvar, t.mul(t.mul(diff, diff), t.exp(t.neg(logvar)))), 0.5);

        Var ls = t.softmax_rows(
            t.add(t.matmul(h, t.param(ps_, "src.w")), t.param(ps_, "src.b")));
        Var eu = t.row(t.param(ps_, "emb"), iu);
        Var ld = t.softmax_rows(
            t.add(t.matmul(t.concat_cols(h, eu), t.param(ps_, "dst.w")),
                  t.param(ps_, "dst.b")));
        Var entity_nll =
            t.neg(t.add(t.log(t.clamp_min(t.pick(ls, 0, iu), 1e-12)),
                        t.log(t.clamp_min(t.pick(ld, 0, iv), 1e-12))));
        if (terms) {
            terms->time_nll += t.value(time_nll).item();
            terms->entity_nll += t.value(entity_nll).item();
            terms->per_step.emplace_back(t.value(time_nll).item(),
                                         t.value(entity_nll).item());
        }
        total = t.add(total, t.add(time_nll, entity_nll));
        h = ad::gru_forward(t, ps_, "gru", input_row(t, ev.source, ev.dest, dt), h);
        prev_t = ev.time;
    }
    if (terms) terms->total = terms->time_nll + terms->entity_nll;
    return total;
}

void GruGaussianModel::begin(const Window& w) {
    h_state_ = ad::Tensor(1, cfg_.hidden_dim, 0.0);
    current_t_ = w.t_n;
}

StepProbe GruGaussianModel::observe(const Event& truth) {
    const double dt = truth.time - current_t_;
    const std::size_t iu = index_in(community_, truth.source);
    const std::size_t iv = index_in(community_, truth.dest);
    Tape t;
    Var h = t.constant(h_state_);
    Var mean = t.add(t.matmul(h, t.param(ps_, "mu.w")), t.param(ps_, "mu.b"));
    StepProbe p;
    p.dt_pred = std::max(t.value(mean).item(), 1e-6);
    p.lambda_total = 1.0 / p.dt_pred;
    Var ls = t.softmax_rows(
        t.add(t.matmul(h, t.param(ps_, "src.w")), t.param(ps_, "src.b")));
    Var eu = t.row(t.param(ps_, "emb"), iu);
    Var ld = t.softmax_rows(
        t.add(t.matmul(t.concat_cols(h, eu), t.param(ps_, "dst.w")),
              t.param(ps_, "dst.b")));
    p.p_source = t.value(ls).v[iu];
    p.p_dest = t.value(ld).v[iv];
    Var h2 = ad::gru_forward(t, ps_, "gru",
                             input_row(t, truth.source, truth.dest, dt), h);
    h_state_ = t.value(h2);
    current_t_ = truth.time;
    return p;
}

ForecastStep GruGaussianModel::predict(DtMode mode, std::mt19937_64* rng) {
    Tape t;
    Var h = t.constant(h_state_);
    Var mean = t.add(t.matmul(h, t.param(ps_, "mu.w")), t.param(ps_, "mu.b"));
    Var logvar = t.add(t.matmul(h, t.param(ps_, "lv.w")), t.param(ps_, "lv.b"));
    ForecastStep s;
    if (mode == DtMode::Sample) {
        if (!rng) throw std::invalid_argument("gru_gaussian: sampling needs an RNG");
        std::normal_distribution<double> nd(
            t.value(mean).item(), std::exp(0.5 * t.value(logvar).item()));
        s.dt = std::max(nd(*rng), 1e-6);
    } else {
        s.dt = std::max(t.value(mean).item(), 1e-6);
    }
    s.lambda_total = 1.0 / s.dt;
    s.t_abs = current_t_ + s.dt;
    Var ls = t.softmax_rows(
        t.add(t.matmul(h, t.param(ps_, "src.w")), t.param(ps_, "src.b")));
    s.p_source = t.value(ls).v;
    const std::size_t iu = argmax_lowest(s.p_source);
    Var eu = t.row(t.param(ps_, "emb"), iu);
    Var ld = t.softmax_rows(
        t.add(t.matmul(t.concat_cols(h, eu), t.param(ps_, "dst.w")),
              t.param(ps_, "dst.b")));
    s.p_dest = t.value(ld).v;
    s.source = community_[iu];
    s.dest = community_[argmax_lowest(s.p_dest)];
    Var h2 = ad::gru_forward(t, ps_, "gru", input_row(t, s.source, s.dest, s.dt), h);
    h_state_ = t.value(h2);
    current_t_ = s.t_abs;
    return s;
}

void write_poisson_csv(const PoissonModel& m, std::ostream& out) {
    out << "u,v,lambda\n";
    out.precision(17);
    for (const auto& [pair, r] : m.rates)
        out << pair.first << "," << pair.second << "," << r << "\n";
}

void write_hawkes_csv(const HawkesModel& m, std::ostream& out) {
    out << "u,v,mu,alpha\n";
    out.precision(17);
    for (const auto& [pair, p] : m.pairs)
        out << pair.first << "," << pair.second << "," << p.mu << "," << p.alpha
            << "\n";
}

}  // namespace cep3
