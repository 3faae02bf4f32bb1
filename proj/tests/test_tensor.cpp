#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cep3/nn.hpp"
#include "oracles.hpp"

using namespace cep3::ad;

namespace {
// Scalarizes a matrix output so every op can be FD-checked through one loss.
Var squash(Tape& t, Var m) {
    Var s = t.mul(m, m);
    return t.sum_all(t.tanh(s));
}
}  // namespace

TEST_CASE("elementwise and matmul gradients match finite differences") {
    ParameterSet ps(42);
    ps.add("a", 3, 4, Init::UniformFanIn);
    ps.add("b", 4, 2, Init::UniformFanIn);
    ps.add("c", 3, 2, Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var a = t.param(ps, "a"), b = t.param(ps, "b"), c = t.param(ps, "c");
        Var m = t.matmul(a, b);
        Var s = t.add(t.mul(m, c), t.sub(m, t.scale(c, 0.7)));
        return squash(t, t.add_scalar(s, 0.1));
    });
    CHECK(rep.checked == 3 * 4 + 4 * 2 + 3 * 2);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("activation gradients: softplus, cos, tanh, sigmoid, exp, log") {
    ParameterSet ps(7);
    ps.add("x", 2, 5, Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var x = t.param(ps, "x");
        Var y = t.add(t.softplus(x), t.cos(x));
        y = t.add(y, t.sigmoid(t.tanh(x)));
        y = t.add(y, t.log(t.add_scalar(t.exp(x), 1.5)));
        return t.sum_all(y);
    });
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows: normalization and gradient") {
    ParameterSet ps(3);
    ps.add("x", 3, 6, Init::UniformFanIn);
    {
        Tape t;
        Var p = t.softmax_rows(t.param(ps, "x"));
        const Tensor& v = t.value(p);
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 6; ++c) s += v.v[r * 6 + c];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var p = t.softmax_rows(t.param(ps, "x"));
        return t.sum_all(t.mul(p, t.cos(p)));  // non-linear readout
    });
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax is shift invariant and survives large logits") {
    Tape t;
    Tensor big(1, 3);
    big.v = {1000.0, 1001.0, 999.0};
    Tensor small(1, 3);
    small.v = {0.0, 1.0, -1.0};
    const Tensor a = t.value(t.softmax_rows(t.constant(big)));
    const Tensor b = t.value(t.softmax_rows(t.constant(small)));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
}

TEST_CASE("structural ops: concat, stack, transpose, reshape, row, pick") {
    ParameterSet ps(11);
    ps.add("a", 2, 3, Init::UniformFanIn);
    ps.add("b", 2, 2, Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var a = t.param(ps, "a"), b = t.param(ps, "b");
        Var cat = t.concat_cols(a, b);                    // 2x5
        Var tr = t.transpose(cat);                        // 5x2
        Var rs = t.reshape(tr, 2, 5);
        Var st = t.stack_rows({t.row(rs, 0), t.row(rs, 1), t.row(cat, 0)});
        Var p = t.pick(st, 2, 4);
        return t.add(squash(t, st), t.mul(p, p));
    });
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("clamp ops gate gradients at their boundary") {
    ParameterSet ps(5);
    Tensor& x = ps.add("x", 1, 4, Init::Zeros);
    x.v = {-2.0, -0.5, 0.5, 2.0};
    Tape t;
    Var lo = t.clamp_min(t.param(ps, "x"), 0.0);
    Var hi = t.clamp_max(t.param(ps, "x"), 1.0);
    Var loss = t.sum_all(t.add(lo, hi));
    t.backward(loss);
    const Tensor g = t.collect_grads(ps).at("x");
    // below the floor only clamp_max passes; above the ceiling only clamp_min
    CHECK(g.v[0] == doctest::Approx(1.0));
    CHECK(g.v[1] == doctest::Approx(1.0));
    CHECK(g.v[2] == doctest::Approx(2.0));
    CHECK(g.v[3] == doctest::Approx(1.0));
    CHECK(t.value(lo).v[0] == 0.0);
    CHECK(t.value(hi).v[3] == 1.0);
}

TEST_CASE("mean_rows and add_rowvec gradients") {
    ParameterSet ps(9);
    ps.add("m", 4, 3, Init::UniformFanIn);
    ps.add("b", 1, 3, Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var m = t.add_rowvec(t.param(ps, "m"), t.param(ps, "b"));
        return squash(t, t.mean_rows(m));
    });
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("gradient accumulates when a parameter is reused") {
    ParameterSet ps(1);
    Tensor& x = ps.add("x", 1, 1, Init::Zeros);
    x.v[0] = 3.0;
    Tape t;
    Var v = t.param(ps, "x");
    Var loss = t.mul(v, v);  // x^2, d/dx = 2x = 6
    t.backward(loss);
    CHECK(t.collect_grads(ps).at("x").v[0] == doctest::Approx(6.0));
}

TEST_CASE("collect_grads zero-fills untouched parameters") {
    ParameterSet ps(2);
    ps.add("used", 1, 2, Init::UniformFanIn);
    ps.add("unused", 3, 3, Init::UniformFanIn);
    Tape t;
    Var loss = t.sum_all(t.param(ps, "used"));
    t.backward(loss);
    GradMap g = t.collect_grads(ps);
    REQUIRE(g.count("unused") == 1);
    for (double x : g.at("unused").v) CHECK(x == 0.0);
}

TEST_CASE("shape mismatches throw") {
    Tape t;
    Var a = t.constant(Tensor(2, 3, 1.0));
    Var b = t.constant(Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(t.add(a, b), ShapeError);
    CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
    CHECK_THROWS_AS(t.reshape(a, 4, 2), ShapeError);
    CHECK_THROWS_AS(t.row(a, 5), ShapeError);
}

TEST_CASE("non-finite forward values are rejected") {
    Tape t;
    Var z = t.constant(Tensor::scalar(0.0));
    CHECK_THROWS_AS(t.log(z), NonFiniteError);
    Var huge = t.constant(Tensor::scalar(1e308));
    CHECK_THROWS_AS(t.exp(t.mul(huge, huge)), NonFiniteError);
}

TEST_CASE("mlp and gru gradients match finite differences") {
    ParameterSet ps(77);
    mlp_init(ps, "mlp", 4, 6, 3);
    gru_init(ps, "gru", 3, 5);
    ps.add("x", 1, 4, Init::UniformFanIn);
    ps.add("h", 1, 5, Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var y = mlp_forward(t, ps, "mlp", t.param(ps, "x"));
        Var h = gru_forward(t, ps, "gru", y, t.param(ps, "h"));
        return squash(t, h);
    });
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("multi-head attention gradients match finite differences") {
    ParameterSet ps(13);
    mha_init(ps, "attn", 6, 8, 6, 2);
    ps.add("q", 1, 6, Init::UniformFanIn);
    ps.add("kv", 4, 8, Init::UniformFanIn);
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        Var out = mha_forward(t, ps, "attn", t.param(ps, "q"), t.param(ps, "kv"),
                              t.param(ps, "kv"), 2, 6);
        return squash(t, out);
    });
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("time encoding: cosine form and gradient") {
    ParameterSet ps(5);
    time_enc_init(ps, "te", 8);
    {
        Tape t;
        Var phi = time_enc_forward(t, ps, "te", 2.5);
        const Tensor& v = t.value(phi);
        REQUIRE(v.cols == 8);
        const Tensor& om = ps.get("te.omega");
        const Tensor& b = ps.get("te.b");
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(v.v[i] == doctest::Approx(std::cos(om.v[i] * 2.5 + b.v[i])));
        CHECK_THROWS(time_enc_forward(t, ps, "te", -1.0));
    }
    auto rep = oracles::fd_check(ps, [&](Tape& t) {
        return squash(t, time_enc_forward(t, ps, "te", 1.7));
    });
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("adam step matches a hand-computed update") {
    ParameterSet ps(3);
    Tensor& x = ps.add("x", 1, 1, Init::Zeros);
    x.v[0] = 1.0;
    GradMap g;
    g["x"] = Tensor::scalar(0.5);
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(ps, g, cfg);
    // first step: m_hat = g, v_hat = g^2 -> x -= lr * g / (|g| + eps)
    const double expect = 1.0 - 0.1 * 0.5 / (0.5 + cfg.eps);
    CHECK(ps.get("x").v[0] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(ps.adam_step_count == 1);
}

TEST_CASE("global norm clipping rescales exactly to the threshold") {
    GradMap g;
    g["a"] = Tensor(1, 2);
    g["a"].v = {3.0, 0.0};
    g["b"] = Tensor(1, 1);
    g["b"].v = {4.0};  // global norm 5
    const double before = clip_global_norm(g, 2.5);
    CHECK(before == doctest::Approx(5.0));
    double norm2 = 0.0;
    for (auto& [k, t] : g)
        for (double x : t.v) norm2 += x * x;
    CHECK(std::sqrt(norm2) == doctest::Approx(2.5));
}

TEST_CASE("parameter save/load round-trips values and adam state") {
    ParameterSet ps(99);
    ps.add("w", 3, 2, Init::UniformFanIn);
    GradMap g;
    g["w"] = Tensor(3, 2, 0.25);
    adam_step(ps, g, {});
    const std::string blob = "params_rt.bin", man = "params_rt.json";
    ps.save(blob, man);
    ParameterSet back = ParameterSet::load(blob, man);
    CHECK(back.adam_step_count == 1);
    const Tensor& a = ps.get("w");
    const Tensor& b = back.get("w");
    REQUIRE(a.v.size() == b.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i)
        CHECK(b.v[i] == doctest::Approx(a.v[i]).epsilon(1e-6));  // fp32 blob
    std::remove(blob.c_str());
    std::remove(man.c_str());
}
