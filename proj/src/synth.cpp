#include "cep3/synth.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "json.hpp"

namespace cep3 {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t pair_seed(std::uint64_t base, NodeId u, NodeId v) {
    return splitmix64(splitmix64(base ^ (0x100000001ULL * u)) ^ v);
}

std::vector<double> simulate_poisson(double lambda, double horizon,
                                     std::mt19937_64& rng) {
    std::vector<double> out;
    if (lambda <= 0.0) return out;
    std::exponential_distribution<double> gap(lambda);
    double t = gap(rng);
    while (t < horizon) {
        out.push_back(t);
        t += gap(rng);
    }
    return out;
}

// Ogata thinning with the piecewise-decaying bound: between candidate draws
// the intensity mu + alpha*beta*A only decays, so the value at the previous
// point dominates.
std::vector<double> simulate_hawkes(const PairProcess& p, double horizon,
                                    std::mt19937_64& rng, SimStats* stats) {
    std::vector<double> out;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double t = 0.0;
    double a = 0.0;  // sum of e^{-beta (t - t_j)} over accepted t_j <= t
    while (true) {
        const double bound = p.mu + p.alpha * p.beta * a;
        if (bound <= 0.0) break;
        std::exponential_distribution<double> gap(bound);
        const double dt = gap(rng);
        t += dt;
        if (t >= horizon) break;
        a *= std::exp(-p.beta * dt);
        const double lam = p.mu + p.alpha * p.beta * a;
        assert(lam <= bound + 1e-12);
        if (stats) ++stats->thinning_proposals;
        if (u01(rng) * bound <= lam) {
            if (stats) ++stats->thinning_accepts;
            out.push_back(t);
            a += 1.0;
        }
    }
    return out;
}

}  // namespace

EventStream simulate(const GroundTruthSpec& spec, SimStats* stats) {
    if (!(spec.horizon > 0.0)) throw DataError("simulate: horizon must be positive");
    std::vector<Event> events;
    for (const auto& [key, p] : spec.pairs) {
        if (key.first < 0 || key.second < 0 ||
            static_cast<std::size_t>(key.first) >= spec.node_count ||
            static_cast<std::size_t>(key.second) >= spec.node_count)
            throw DataError("simulate: pair outside the node set");
        if (p.kind == PairProcess::Kind::Hawkes && !(p.alpha < p.beta))
            throw DataError("simulate: unstable Hawkes pair (alpha >= beta)");
        std::mt19937_64 rng(pair_seed(spec.seed, key.first, key.second));
        std::vector<double> times =
            p.kind == PairProcess::Kind::Poisson
                ? simulate_poisson(p.lambda, spec.horizon, rng)
                : simulate_hawkes(p, spec.horizon, rng, stats);
        for (double t : times) events.push_back({key.first, key.second, t, {}});
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });
    EventStream s;
    s.events = std::move(events);
    s.node_count = spec.node_count;
    s.feature_dim = 0;
    s.original_ids.resize(spec.node_count);
    for (std::size_t i = 0; i < spec.node_count; ++i)
        s.original_ids[i] = static_cast<NodeId>(i);
    return s;
}

double oracle_nll(const GroundTruthSpec& spec, const std::vector<Event>& stream) {
    std::map<std::pair<NodeId, NodeId>, std::vector<double>> per_pair;
    for (const Event& e : stream) per_pair[{e.source, e.dest}].push_back(e.time);
    double nll = 0.0;
    for (const auto& [key, p] : spec.pairs) {
        const std::vector<double>* ts = nullptr;
        auto it = per_pair.find(key);
        static const std::vector<double> empty;
        ts = it == per_pair.end() ? &empty : &it->second;
        if (p.kind == PairProcess::Kind::Poisson) {
            nll += p.lambda * spec.horizon;
            if (p.lambda > 0.0)
                nll -= static_cast<double>(ts->size()) * std::log(p.lambda);
            else if (!ts->empty())
                throw DataError("oracle_nll: events on a zero-rate pair");
        } else {
            nll += p.mu * spec.horizon;
            double a = 0.0, prev = 0.0;
            for (std::size_t i = 0; i < ts->size(); ++i) {
                if (i > 0) a = std::exp(-p.beta * ((*ts)[i] - prev)) * (a + 1.0);
                prev = (*ts)[i];
                nll -= std::log(p.mu + p.alpha * p.beta * a);
                nll += p.alpha * (1.0 - std::exp(-p.beta * (spec.horizon - (*ts)[i])));
            }
        }
        per_pair.erase(key);
    }
    if (!per_pair.empty())
        throw DataError("oracle_nll: stream has events on pairs outside the spec");
    return nll;
}

namespace {
GroundTruthSpec two_community_base(double horizon, std::uint64_t seed) {
    GroundTruthSpec s;
    s.node_count = 12;
    s.horizon = horizon;
    s.seed = seed;
    return s;
}
}  // namespace

GroundTruthSpec two_community_poisson(double rate, double horizon,
                                      std::uint64_t seed) {
    GroundTruthSpec s = two_community_base(horizon, seed);
    for (NodeId base : {NodeId{0}, NodeId{6}})
        for (NodeId u = base; u < base + 6; ++u)
            for (NodeId v = base; v < base + 6; ++v)
                if (u != v) s.pairs[{u, v}] = {PairProcess::Kind::Poisson, rate};
    return s;
}

GroundTruthSpec two_community_hawkes(double mu, double alpha, double beta,
                                     double horizon, std::uint64_t seed) {
    GroundTruthSpec s = two_community_base(horizon, seed);
    for (NodeId base : {NodeId{0}, NodeId{6}})
        for (NodeId u = base; u < base + 6; ++u)
            for (NodeId v = base; v < base + 6; ++v)
                if (u != v) {
                    PairProcess p;
                    p.kind = PairProcess::Kind::Hawkes;
                    p.mu = mu;
                    p.alpha = alpha;
                    p.beta = beta;
                    s.pairs[{u, v}] = p;
                }
    return s;
}

void write_spec_json(const GroundTruthSpec& spec, std::ostream& out) {
    nlohmann::json j;
    j["node_count"] = spec.node_count;
    j["horizon"] = spec.horizon;
    j["seed"] = spec.seed;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [key, p] : spec.pairs) {
        nlohmann::json e;
        e["u"] = key.first;
        e["v"] = key.second;
        if (p.kind == PairProcess::Kind::Poisson) {
            e["kind"] = "poisson";
            e["lambda"] = p.lambda;
        } else {
            e["kind"] = "hawkes";
            e["mu"] = p.mu;
            e["alpha"] = p.alpha;
            e["beta"] = p.beta;
        }
        pairs.push_back(e);
    }
    j["pairs"] = pairs;
    out << j.dump(2) << "\n";
}

GroundTruthSpec read_spec_json(std::istream& in) {
    nlohmann::json j;
    in >> j;
    GroundTruthSpec s;
    s.node_count = j.at("node_count").get<std::size_t>();
    s.horizon = j.at("horizon").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("pairs")) {
        PairProcess p;
        const std::string kind = e.at("kind").get<std::string>();
        if (kind == "poisson") {
            p.kind = PairProcess::Kind::Poisson;
            p.lambda = e.at("lambda").get<double>();
        } else if (kind == "hawkes") {
            p.kind = PairProcess::Kind::Hawkes;
            p.mu = e.at("mu").get<double>();
            p.alpha = e.at("alpha").get<double>();
            p.beta = e.at("beta").get<double>();
        } else {
            throw DataError("ground-truth spec: unknown pair kind '" + kind + "'");
        }
        s.pairs[{e.at("u").get<NodeId>(), e.at("v").get<NodeId>()}] = p;
    }
    return s;
}

}  // namespace cep3
