#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "cep3/ar_update.hpp"
#include "cep3/forecaster.hpp"
#include "oracles.hpp"

using namespace cep3;
using ad::ParameterSet;
using ad::Tape;
using ad::Var;

namespace {

ForecasterConfig tiny_fc() {
    ForecasterConfig c;
    c.hidden_dim = 6;
    c.head_hidden = 4;
    c.d_time = 4;
    return c;
}

std::vector<Var> random_states(Tape& t, std::size_t n, std::size_t dim,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.5);
    std::vector<Var> out;
    for (std::size_t i = 0; i < n; ++i) {
        ad::Tensor x(1, dim);
        for (double& v : x.v) v = nd(rng);
        out.push_back(t.constant(x));
    }
    return out;
}

std::vector<Var> equal_states(Tape& t, std::size_t n, std::size_t dim) {
    std::vector<Var> out;
    ad::Tensor x(1, dim, 0.3);
    for (std::size_t i = 0; i < n; ++i) out.push_back(t.constant(x));
    return out;
}

EventStream parse(const std::string& body) {
    std::istringstream in(body);
    return ingest_events(in);
}

}  // namespace

TEST_CASE("intensities: softplus(0) = ln 2 under zero weights") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(0);
    forecaster_init(ps, cfg);
    for (auto& [name, tsr] : ps.all_mut())
        if (name.rfind("fc.t", 0) == 0)
            for (double& x : tsr.v) x = 0.0;
    Tape t;
    auto st = random_states(t, 5, cfg.hidden_dim, 1);
    Intensities in = intensities(t, ps, cfg, st);
    const ad::Tensor per = t.value(in.per_node);
    for (double l : per.v) CHECK(l == doctest::Approx(std::log(2.0)));
    CHECK(t.value(in.total).item() == doctest::Approx(5.0 * std::log(2.0)));
}

TEST_CASE("intensities: non-negativity, additivity, and the op counter") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(3);
    forecaster_init(ps, cfg);
    Tape t;
    auto st = random_states(t, 7, cfg.hidden_dim, 2);
    OpCounter counter;
    Intensities in = intensities(t, ps, cfg, st, &counter);
    const ad::Tensor per = t.value(in.per_node);
    double sum = 0.0;
    for (double l : per.v) {
        CHECK(l >= 0.0);
        sum += l;
    }
    CHECK(t.value(in.total).item() == doctest::Approx(sum));
    CHECK(counter.logits == 7);
    CHECK_THROWS(intensities(t, ps, cfg, {}));
}

TEST_CASE("intensity gradient matches finite differences") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(5);
    forecaster_init(ps, cfg);
    ps.add("h", 4, cfg.hidden_dim, ad::Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var h = t.param(ps, "h");
        std::vector<Var> st;
        for (std::size_t i = 0; i < 4; ++i) st.push_back(t.row(h, i));
        return intensities(t, ps, cfg, st).total;
    });
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("predict_dt: mean and sampling") {
    CHECK(predict_dt(2.0, DtMode::Mean) == doctest::Approx(0.5));
    CHECK_THROWS(predict_dt(0.0, DtMode::Mean));
    std::mt19937_64 rng(123);
    double sum = 0.0;
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) sum += predict_dt(6.0, DtMode::Sample, &rng);
    CHECK(std::abs(sum / n - 1.0 / 6.0) / (1.0 / 6.0) < 0.02);
}

TEST_CASE("superposition: min of Exponential(1,2,3) matches Exponential(6)") {
    std::mt19937_64 rng(7);
    const std::size_t n = 100000;
    std::vector<double> mins(n), direct(n);
    std::exponential_distribution<double> e1(1.0), e2(2.0), e3(3.0);
    for (std::size_t i = 0; i < n; ++i)
        mins[i] = std::min({e1(rng), e2(rng), e3(rng)});
    for (std::size_t i = 0; i < n; ++i)
        direct[i] = predict_dt(6.0, DtMode::Sample, &rng);
    auto ks = oracles::ks_two_sample(mins, direct);
    CHECK(ks.p > 0.01);
}

TEST_CASE("source distribution: uniformity, singleton, and normalization") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(9);
    forecaster_init(ps, cfg);
    Tape t;
    auto eq = equal_states(t, 4, cfg.hidden_dim);
    const ad::Tensor p = t.value(source_distribution(t, ps, cfg, eq, 0.7));
    for (double x : p.v) CHECK(x == doctest::Approx(0.25).epsilon(1e-9));

    auto one = equal_states(t, 1, cfg.hidden_dim);
    CHECK(t.value(source_distribution(t, ps, cfg, one, 0.7)).v[0] ==
          doctest::Approx(1.0));

    auto rn = random_states(t, 5, cfg.hidden_dim, 5);
    const ad::Tensor q = t.value(source_distribution(t, ps, cfg, rn, 0.7));
    double s = 0.0;
    for (double x : q.v) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("dest distribution: uniform on equal states, source-sensitive") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(11);
    forecaster_init(ps, cfg);
    Tape t;
    auto eq = equal_states(t, 3, cfg.hidden_dim);
    const ad::Tensor p = t.value(dest_distribution(t, ps, cfg, eq, 1, 0.2));
    for (double x : p.v) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    auto rn = random_states(t, 4, cfg.hidden_dim, 6);
    const ad::Tensor a = t.value(dest_distribution(t, ps, cfg, rn, 0, 0.2));
    const ad::Tensor b = t.value(dest_distribution(t, ps, cfg, rn, 3, 0.2));
    double tv = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) tv += std::abs(a.v[i] - b.v[i]);
    CHECK(tv / 2.0 > 0.0);
}

TEST_CASE("joint head: uniform on identical states, sums to 1, capacity guard") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(13);
    forecaster_init(ps, cfg);
    joint_head_init(ps, cfg);
    Tape t;
    auto eq = equal_states(t, 2, cfg.hidden_dim);
    const ad::Tensor p = t.value(joint_distribution(t, ps, cfg, eq, 0.4));
    REQUIRE(p.v.size() == 4);
    for (double x : p.v) CHECK(x == doctest::Approx(0.25).epsilon(1e-9));

    ForecasterConfig small = cfg;
    small.max_joint_pairs = 8;
    auto st = equal_states(t, 3, cfg.hidden_dim);  // 9 pairs > 8
    CHECK_THROWS(joint_distribution(t, ps, small, st, 0.4));
}

TEST_CASE("induced chain joint sums to 1 over all pairs") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(17);
    forecaster_init(ps, cfg);
    for (std::size_t n : {2u, 5u, 17u}) {
        Tape t;
        auto st = random_states(t, n, cfg.hidden_dim, 100 + n);
        const ad::Tensor pu = t.value(source_distribution(t, ps, cfg, st, 0.3));
        double total = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            const ad::Tensor pv = t.value(dest_distribution(t, ps, cfg, st, u, 0.3));
            for (std::size_t v = 0; v < n; ++v) total += pu.v[u] * pv.v[v];
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
    }
}

TEST_CASE("op counter separates O(n) chain from O(n^2) joint") {
    ForecasterConfig cfg = tiny_fc();
    ParameterSet ps(19);
    forecaster_init(ps, cfg);
    joint_head_init(ps, cfg);
    for (std::size_t n : {4u, 9u}) {
        Tape t;
        auto st = random_states(t, n, cfg.hidden_dim, n);
        OpCounter chain, joint;
        source_distribution(t, ps, cfg, st, 0.1, &chain);
        dest_distribution(t, ps, cfg, st, 0, 0.1, &chain);
        joint_distribution(t, ps, cfg, st, 0.1, &joint);
        CHECK(chain.logits == 2 * n);
        CHECK(joint.logits == n * n);
    }
}

TEST_CASE("self-loop masking zeroes the diagonal") {
    ForecasterConfig cfg = tiny_fc();
    cfg.mask_self_loops = true;
    ParameterSet ps(23);
    forecaster_init(ps, cfg);
    Tape t;
    auto st = random_states(t, 4, cfg.hidden_dim, 8);
    const ad::Tensor p = t.value(dest_distribution(t, ps, cfg, st, 2, 0.2));
    CHECK(p.v[2] < 1e-12);
    double s = 0.0;
    for (double x : p.v) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("argmax tie-break picks the lowest index") {
    CHECK(argmax_lowest({0.25, 0.25, 0.25, 0.25}) == 0);
    CHECK(argmax_lowest({0.1, 0.4, 0.4, 0.1}) == 1);
    CHECK(argmax_lowest({0.9}) == 0);
}

// --- rollout graph and AR update ----------------------------------------

TEST_CASE("init_rollout_graph respects the hop bound") {
    // path a(0) - b(1) - c(2)
    EventStream s = parse("source,dest,time\n0,1,1\n1,2,2\n");
    TemporalGraph g(s);
    RolloutGraph g2 = init_rollout_graph(g, {0, 2}, 2);
    CHECK(g2.initial_edge_count() == 1);  // distance 2 within L=2
    RolloutGraph g1 = init_rollout_graph(g, {0, 2}, 1);
    CHECK(g1.initial_edge_count() == 0);

    // never co-reachable pair
    EventStream iso = parse("source,dest,time\n0,1,1\n2,3,2\n");
    TemporalGraph gi(iso);
    CHECK(init_rollout_graph(gi, {0, 2}, 3).initial_edge_count() == 0);
}

TEST_CASE("apply_event: multiplicity accumulates, outsiders rejected") {
    EventStream s = parse("source,dest,time\n0,1,1\n");
    TemporalGraph g(s);
    RolloutGraph rg = init_rollout_graph(g, {0, 1}, 2);
    const std::size_t base = rg.edge_count();
    apply_event(rg, 0, 1);
    apply_event(rg, 0, 1);
    CHECK(rg.edge_count() == base + 2);
    CHECK(rg.neighbors(rg.index_of(0)).size() >= 2);
    CHECK_THROWS_AS(apply_event(rg, 0, 5), DataError);
}

TEST_CASE("rollout edge count = initial + k after k steps") {
    EventStream s = parse("source,dest,time\n0,1,1\n1,2,2\n0,2,3\n");
    TemporalGraph g(s);
    RolloutGraph rg = init_rollout_graph(g, {0, 1, 2}, 2);
    const std::size_t init = rg.initial_edge_count();
    CHECK(rg.edge_count() == init);
    for (int k = 1; k <= 5; ++k) {
        apply_event(rg, k % 3, (k + 1) % 3);
        CHECK(rg.edge_count() == init + static_cast<std::size_t>(k));
    }
}

TEST_CASE("propagate_update: gradients through one AR step") {
    EventStream s = parse("source,dest,time\n0,1,1\n1,2,2\n2,3,3\n0,3,4\n");
    TemporalGraph g(s);
    RolloutGraph rg = init_rollout_graph(g, {0, 1, 2, 3}, 2);
    UpdateConfig cfg;
    cfg.hidden_dim = 5;
    cfg.d_time = 4;
    ParameterSet ps(31);
    update_net_init(ps, cfg);
    ps.add("h", 4, cfg.hidden_dim, ad::Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var h = t.param(ps, "h");
        std::vector<Var> st;
        for (std::size_t i = 0; i < 4; ++i) st.push_back(t.row(h, i));
        auto up = propagate_update(t, ps, cfg, rg, st, 0.8);
        Var sum = t.constant_scalar(0.0);
        for (Var v : up) sum = t.add(sum, t.sum_all(t.tanh(v)));
        return sum;
    });
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("incident-only update leaves bystanders bit-identical") {
    EventStream s = parse("source,dest,time\n0,1,1\n1,2,2\n0,2,3\n2,3,4\n");
    TemporalGraph g(s);
    RolloutGraph rg = init_rollout_graph(g, {0, 1, 2, 3}, 2);
    UpdateConfig cfg;
    cfg.hidden_dim = 5;
    cfg.d_time = 4;
    ParameterSet ps(37);
    update_net_init(ps, cfg);
    Tape t;
    auto st = random_states(t, 4, cfg.hidden_dim, 9);
    auto up = incident_only_update(t, ps, cfg, rg, st, 0.5, 1, 2);
    // 0 and 3 untouched
    for (std::size_t idx : {0u, 3u}) {
        const ad::Tensor& before = t.value(st[idx]);
        const ad::Tensor& after = t.value(up[idx]);
        for (std::size_t i = 0; i < before.v.size(); ++i)
            CHECK(after.v[i] == before.v[i]);
    }
    // 1 and 2 changed
    for (std::size_t idx : {1u, 2u}) {
        double tv = 0.0;
        const ad::Tensor& before = t.value(st[idx]);
        const ad::Tensor& after = t.value(up[idx]);
        for (std::size_t i = 0; i < before.v.size(); ++i)
            tv += std::abs(after.v[i] - before.v[i]);
        CHECK(tv > 0.0);
    }
}

TEST_CASE("two-node community: ablation equals full propagation") {
    EventStream s = parse("source,dest,time\n0,1,1\n");
    TemporalGraph g(s);
    RolloutGraph rg = init_rollout_graph(g, {0, 1}, 2);
    UpdateConfig cfg;
    cfg.hidden_dim = 5;
    cfg.d_time = 4;
    cfg.passes = 1;
    ParameterSet ps(41);
    update_net_init(ps, cfg);
    Tape t;
    auto st = random_states(t, 2, cfg.hidden_dim, 10);
    auto full = propagate_update(t, ps, cfg, rg, st, 0.6);
    auto abl = incident_only_update(t, ps, cfg, rg, st, 0.6, 0, 1);
    for (std::size_t idx = 0; idx < 2; ++idx) {
        const ad::Tensor& a = t.value(full[idx]);
        const ad::Tensor& b = t.value(abl[idx]);
        for (std::size_t i = 0; i < a.v.size(); ++i)
            CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("ar update is stable over 500 steps") {
    EventStream s = parse("source,dest,time\n0,1,1\n1,2,2\n0,2,3\n");
    TemporalGraph g(s);
    RolloutGraph rg = init_rollout_graph(g, {0, 1, 2}, 2);
    UpdateConfig cfg;
    cfg.hidden_dim = 4;
    cfg.d_time = 4;
    ParameterSet ps(43);
    update_net_init(ps, cfg);
    std::vector<ad::Tensor> vals(3, ad::Tensor(1, cfg.hidden_dim, 0.1));
    std::mt19937_64 rng(11);
    for (int step = 0; step < 500; ++step) {
        Tape t;
        std::vector<Var> st;
        for (const auto& v : vals) st.push_back(t.constant(v));
        apply_event(rg, static_cast<NodeId>(rng() % 3),
                    static_cast<NodeId>(rng() % 3));
        auto up = propagate_update(t, ps, cfg, rg, st, 0.2);
        for (std::size_t i = 0; i < 3; ++i) {
            vals[i] = t.value(up[i]);
            for (double x : vals[i].v) REQUIRE(std::isfinite(x));
        }
    }
}
