#include "cep3/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cep3::ad {

Tensor& ParameterSet::add(const std::string& name, std::size_t rows,
                          std::size_t cols, Init init) {
    if (params_.count(name))
        throw std::invalid_argument("ParameterSet: duplicate name " + name);
    Tensor t(rows, cols);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::UniformFanIn: {
            const double bound = std::sqrt(1.0 / static_cast<double>(rows));
            for (double& x : t.v) x = (2.0 * u01(rng_) - 1.0) * bound;
            break;
        }
        case Init::LogUniformFreq: {
            // Frequencies spread log-uniformly over [1e-3, 1e1] so the cosine
            // encoding resolves several time scales at once.
            const double lo = std::log(1e-3), hi = std::log(1e1);
            for (double& x : t.v) x = std::exp(lo + (hi - lo) * u01(rng_));
            break;
        }
    }
    auto [it, ok] = params_.emplace(name, std::move(t));
    (void)ok;
    return it->second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::invalid_argument("ParameterSet: unknown name " + name);
    return it->second;
}

Tensor& ParameterSet::get_mut(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::invalid_argument("ParameterSet: unknown name " + name);
    return it->second;
}

void ParameterSet::save(const std::string& blob_path,
                        const std::string& manifest_path) const {
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open " + blob_path);
    nlohmann::json manifest;
    manifest["format"] = "cep3-params-v1";
    manifest["seed"] = seed_;
    manifest["adam_step"] = adam_step_count;
    nlohmann::json entries = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : params_) {
        std::vector<float> f32(t.v.begin(), t.v.end());
        blob.write(reinterpret_cast<const char*>(f32.data()),
                   static_cast<std::streamsize>(f32.size() * sizeof(float)));
        entries.push_back({{"name", name},
                           {"shape", {t.rows, t.cols}},
                           {"dtype", "f32"},
                           {"offset_bytes", offset}});
        offset += f32.size() * sizeof(float);
    }
    manifest["tensors"] = entries;
    std::ofstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open " + manifest_path);
    mf << manifest.dump(2) << "\n";
}

ParameterSet ParameterSet::load(const std::string& blob_path,
                                const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open " + manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.value("format", "") != "cep3-params-v1")
        throw std::runtime_error("unrecognized parameter container format");
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open " + blob_path);
    ParameterSet ps(manifest.value("seed", std::uint64_t{0}));
    ps.adam_step_count = manifest.value("adam_step", std::int64_t{0});
    for (const auto& e : manifest["tensors"]) {
        std::size_t rows = e["shape"][0], cols = e["shape"][1];
        Tensor t(rows, cols);
        std::vector<float> f32(rows * cols);
        blob.seekg(static_cast<std::streamoff>(e["offset_bytes"].get<std::size_t>()));
        blob.read(reinterpret_cast<char*>(f32.data()),
                  static_cast<std::streamsize>(f32.size() * sizeof(float)));
        if (!blob) throw std::runtime_error("parameter blob truncated");
        for (std::size_t i = 0; i < f32.size(); ++i) t.v[i] = f32[i];
        ps.params_.emplace(e["name"].get<std::string>(), std::move(t));
    }
    return ps;
}

void adam_step(ParameterSet& ps, const GradMap& grads, const AdamConfig& cfg) {
    ps.adam_step_count += 1;
    const double t = static_cast<double>(ps.adam_step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, w] : ps.all_mut()) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        Tensor& m = ps.adam_m.try_emplace(name, w.rows, w.cols, 0.0).first->second;
        Tensor& v = ps.adam_v.try_emplace(name, w.rows, w.cols, 0.0).first->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * g.v[i];
            v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * g.v[i] * g.v[i];
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            w.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

double clip_global_norm(GradMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (double x : g.v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads)
            for (double& x : g.v) x *= s;
    }
    return norm;
}

void merge_grads(GradMap& into, const GradMap& from) {
    for (const auto& [name, g] : from) {
        auto it = into.find(name);
        if (it == into.end()) {
            into[name] = g;
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) it->second.v[i] += g.v[i];
        }
    }
}

// --- layers ------------------------------------------------------------

void mlp_init(ParameterSet& ps, const std::string& prefix, std::size_t in,
              std::size_t hidden, std::size_t out) {
    ps.add(prefix + ".w0", in, hidden, Init::UniformFanIn);
    ps.add(prefix + ".b0", 1, hidden, Init::Zeros);
    ps.add(prefix + ".w1", hidden, out, Init::UniformFanIn);
    ps.add(prefix + ".b1", 1, out, Init::Zeros);
}

Var mlp_forward(Tape& t, const ParameterSet& ps, const std::string& prefix, Var x) {
    Var h = t.tanh(t.add_rowvec(t.matmul(x, t.param(ps, prefix + ".w0")),
                                t.param(ps, prefix + ".b0")));
    return t.add_rowvec(t.matmul(h, t.param(ps, prefix + ".w1")),
                        t.param(ps, prefix + ".b1"));
}

void gru_init(ParameterSet& ps, const std::string& prefix, std::size_t dx,
              std::size_t dh) {
    ps.add(prefix + ".wr", dx + dh, dh, Init::UniformFanIn);
    ps.add(prefix + ".br", 1, dh, Init::Zeros);
    ps.add(prefix + ".wz", dx + dh, dh, Init::UniformFanIn);
    ps.add(prefix + ".bz", 1, dh, Init::Zeros);
    ps.add(prefix + ".wn", dx + dh, dh, Init::UniformFanIn);
    ps.add(prefix + ".bn", 1, dh, Init::Zeros);
}

Var gru_forward(Tape& t, const ParameterSet& ps, const std::string& prefix,
                Var x, Var h_prev) {
    Var xh = t.concat_cols(x, h_prev);
    Var r = t.sigmoid(t.add_rowvec(t.matmul(xh, t.param(ps, prefix + ".wr")),
                                   t.param(ps, prefix + ".br")));
    Var z = t.sigmoid(t.add_rowvec(t.matmul(xh, t.param(ps, prefix + ".wz")),
                                   t.param(ps, prefix + ".bz")));
    Var xrh = t.concat_cols(x, t.mul(r, h_prev));
    Var n = t.tanh(t.add_rowvec(t.matmul(xrh, t.param(ps, prefix + ".wn")),
                                t.param(ps, prefix + ".bn")));
    // h' = (1 - z) * n + z * h
    Var one_minus_z = t.add_scalar(t.neg(z), 1.0);
    return t.add(t.mul(one_minus_z, n), t.mul(z, h_prev));
}

void mha_init(ParameterSet& ps, const std::string& prefix, std::size_t dq,
              std::size_t dkv, std::size_t d_model, std::size_t heads) {
    if (heads == 0 || d_model % heads != 0)
        throw std::invalid_argument("mha: heads must divide d_model");
    const std::size_t dh = d_model / heads;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string p = prefix + ".h" + std::to_string(h);
        ps.add(p + ".wq", dq, dh, Init::UniformFanIn);
        ps.add(p + ".wk", dkv, dh, Init::UniformFanIn);
        ps.add(p + ".wv", dkv, dh, Init::UniformFanIn);
    }
}

Var mha_forward(Tape& t, const ParameterSet& ps, const std::string& prefix,
                Var q, Var keys, Var values, std::size_t heads,
                std::size_t d_model) {
    if (t.value(keys).rows == 0)
        throw ShapeError("mha: empty key set (handle empty neighborhoods upstream)");
    const std::size_t dh = d_model / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string p = prefix + ".h" + std::to_string(h);
        Var qh = t.matmul(q, t.param(ps, p + ".wq"));            // 1 x dh
        Var kh = t.matmul(keys, t.param(ps, p + ".wk"));         // n x dh
        Var vh = t.matmul(values, t.param(ps, p + ".wv"));       // n x dh
        Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);  // 1 x n
        Var attn = t.softmax_rows(scores);
        outs.push_back(t.matmul(attn, vh));                      // 1 x dh
    }
    return t.concat_cols(outs);
}

void time_enc_init(ParameterSet& ps, const std::string& prefix, std::size_t d_time) {
    ps.add(prefix + ".omega", 1, d_time, Init::LogUniformFreq);
    ps.add(prefix + ".b", 1, d_time, Init::Zeros);
}

Var time_enc_forward(Tape& t, const ParameterSet& ps, const std::string& prefix,
                     double dt) {
    if (dt < 0.0)
        throw std::invalid_argument("time encoding: negative time difference");
    Var omega = t.param(ps, prefix + ".omega");
    Var b = t.param(ps, prefix + ".b");
    return t.cos(t.add(t.scale(omega, dt), b));
}

}  // namespace cep3::ad
