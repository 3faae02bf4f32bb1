#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "cep3/encoder.hpp"
#include "oracles.hpp"

using namespace cep3;
using ad::ParameterSet;
using ad::Tape;
using ad::Var;

namespace {
EventStream parse(const std::string& body) {
    std::istringstream in(body);
    return ingest_events(in);
}

EncoderConfig tiny_cfg() {
    EncoderConfig c;
    c.layers = 2;
    c.hidden_dim = 8;
    c.heads = 2;
    c.fanout = 3;
    c.d_time = 4;
    return c;
}
}  // namespace

TEST_CASE("encode on an empty history: all states identical") {
    EventStream s = parse("source,dest,time\n0,1,100\n1,2,100\n");  // future only
    TemporalGraph g(s);
    EncoderConfig cfg = tiny_cfg();
    ParameterSet ps(5);
    encoder_init(ps, cfg, s.feature_dim);
    Tape t;
    NodeStates st = encode(t, ps, g, {0, 1, 2}, 50.0, cfg);
    REQUIRE(st.size() == 3);
    const ad::Tensor a = t.value(st.at(0));
    for (NodeId v : {NodeId{1}, NodeId{2}}) {
        const ad::Tensor& b = t.value(st.at(v));
        for (std::size_t i = 0; i < a.v.size(); ++i)
            CHECK(b.v[i] == doctest::Approx(a.v[i]).epsilon(1e-14));
    }
}

TEST_CASE("encode causality: future events never change states") {
    std::string base = "source,dest,time\n0,1,1\n1,2,2\n2,3,3\n";
    EventStream s1 = parse(base);
    EventStream s2 = parse(base + "0,3,7\n1,3,9\n");  // extra events after t_n=5
    EncoderConfig cfg = tiny_cfg();
    ParameterSet ps(11);
    encoder_init(ps, cfg, 0);
    TemporalGraph g1(s1), g2(s2);
    Tape t1, t2;
    NodeStates a = encode(t1, ps, g1, {0, 1, 2, 3}, 5.0, cfg);
    NodeStates b = encode(t2, ps, g2, {0, 1, 2, 3}, 5.0, cfg);
    for (NodeId v = 0; v < 4; ++v) {
        const ad::Tensor& x = t1.value(a.at(v));
        const ad::Tensor& y = t2.value(b.at(v));
        for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(x.v[i] == y.v[i]);
    }
}

TEST_CASE("identical neighborhoods produce identical states") {
    // hubs 0 and 2 each interact with a fresh partner at the same times;
    // id order keeps ingest compaction the identity
    EventStream s = parse("source,dest,time\n0,1,1\n2,3,1\n0,4,2\n2,5,2\n");
    TemporalGraph g(s);
    EncoderConfig cfg = tiny_cfg();
    ParameterSet ps(21);
    encoder_init(ps, cfg, 0);
    Tape t;
    NodeStates st = encode(t, ps, g, {0, 2}, 4.0, cfg);
    const ad::Tensor& a = t.value(st.at(0));
    const ad::Tensor& b = t.value(st.at(2));
    for (std::size_t i = 0; i < a.v.size(); ++i)
        CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
}

TEST_CASE("encode is deterministic across repeated calls") {
    EventStream s = parse("source,dest,time\n0,1,1\n1,2,2\n0,2,3\n2,3,4\n");
    TemporalGraph g(s);
    EncoderConfig cfg = tiny_cfg();
    ParameterSet ps(33);
    encoder_init(ps, cfg, 0);
    Tape t1, t2;
    NodeStates a = encode(t1, ps, g, {0, 1, 2, 3}, 5.0, cfg);
    NodeStates b = encode(t2, ps, g, {0, 1, 2, 3}, 5.0, cfg);
    for (NodeId v = 0; v < 4; ++v) {
        const ad::Tensor& x = t1.value(a.at(v));
        const ad::Tensor& y = t2.value(b.at(v));
        for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(x.v[i] == y.v[i]);
    }
}

TEST_CASE("single-neighbor attention equals its value projection path") {
    // With exactly one key, softmax weight is 1 regardless of the query, so
    // perturbing parts of the query that only affect scores changes nothing.
    EventStream s = parse("source,dest,time\n0,1,1\n");
    TemporalGraph g(s);
    EncoderConfig cfg = tiny_cfg();
    cfg.layers = 1;
    ParameterSet ps(3);
    encoder_init(ps, cfg, 0);
    Tape t;
    NodeStates st = encode(t, ps, g, {0}, 2.0, cfg);
    CHECK(t.value(st.at(0)).cols == cfg.hidden_dim);
    for (double x : t.value(st.at(0)).v) CHECK(std::isfinite(x));
}

TEST_CASE("gradients through full encode match finite differences") {
    EventStream s = parse(
        "source,dest,time\n0,1,1\n1,2,2\n0,2,3\n2,3,4\n3,4,5\n1,4,6\n");
    EventStream f = synthesize_edge_features(s);
    TemporalGraph g(f);
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.hidden_dim = 6;
    cfg.heads = 2;
    cfg.fanout = 2;
    cfg.d_time = 4;
    ParameterSet ps(17);
    encoder_init(ps, cfg, f.feature_dim);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        NodeStates st = encode(t, ps, g, {0, 1, 2, 3, 4}, 7.0, cfg);
        Var sum = t.constant_scalar(0.0);
        for (auto& [v, h] : st) sum = t.add(sum, t.sum_all(t.tanh(h)));
        return sum;
    });
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("every encoder parameter receives gradient somewhere") {
    EventStream s = parse(
        "source,dest,time\n0,1,1\n1,2,2\n0,2,3\n2,0,4\n1,0,5\n");
    TemporalGraph g(s);
    EncoderConfig cfg = tiny_cfg();
    ParameterSet ps(29);
    encoder_init(ps, cfg, 0);
    Tape t;
    NodeStates st = encode(t, ps, g, {0, 1, 2}, 6.0, cfg);
    Var sum = t.constant_scalar(0.0);
    for (auto& [v, h] : st) sum = t.add(sum, t.sum_all(t.mul(h, h)));
    t.backward(sum);
    ad::GradMap gm = t.collect_grads(ps);
    for (auto& [name, grad] : gm) {
        double norm = 0.0;
        for (double x : grad.v) norm += x * x;
        INFO(name);
        CHECK(norm > 0.0);
    }
}
