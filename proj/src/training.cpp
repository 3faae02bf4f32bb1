#include "cep3/training.hpp"

#include <algorithm>
#include <thread>

namespace cep3 {

std::vector<Window> make_windows(const EventStream& split,
                                 const CommunityAssignment& communities,
                                 std::size_t k, std::size_t stride) {
    if (k < 1) throw DataError("make_windows: K must be >= 1");
    if (stride == 0) stride = k;
    std::vector<Window> out;
    for (std::size_t c = 0; c < communities.communities.size(); ++c) {
        const auto& nodes = communities.communities[c];
        if (nodes.empty()) continue;
        std::vector<Event> local;
        for (const Event& e : split.events) {
            const bool su = std::binary_search(nodes.begin(), nodes.end(), e.source);
            const bool sv = std::binary_search(nodes.begin(), nodes.end(), e.dest);
            if (su && sv) local.push_back(e);
        }
        if (local.empty()) continue;
        const double split_start = split.events.front().time;
        for (std::size_t lo = 0; lo < local.size(); lo += stride) {
            const std::size_t hi = std::min(lo + k, local.size());
            Window w;
            w.community_id = static_cast<int>(c);
            w.community = nodes;
            w.t_n = lo == 0 ? split_start : local[lo - 1].time;
            w.truth.assign(local.begin() + static_cast<std::ptrdiff_t>(lo),
                           local.begin() + static_cast<std::ptrdiff_t>(hi));
            out.push_back(std::move(w));
            if (hi == local.size()) break;
        }
    }
    return out;
}

EpochResult train_epoch(TrainableModel& model, const std::vector<Window>& windows,
                        const TrainConfig& cfg, std::size_t epoch_index) {
    EpochResult res;
    const std::size_t pw = std::max<std::size_t>(1, cfg.parallel_windows);
    ad::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

    std::size_t batch_index = 0;
    for (std::size_t lo = 0; lo < windows.size(); lo += pw, ++batch_index) {
        const std::size_t hi = std::min(lo + pw, windows.size());
        const std::size_t nb = hi - lo;

        std::vector<ad::GradMap> grads(nb);
        std::vector<LossTerms> terms(nb);
        std::vector<bool> ok(nb, false);

        auto run_window = [&](std::size_t j) {
            const Window& w = windows[lo + j];
            if (w.truth.empty()) return;
            ad::Tape tape;
            ad::Var loss = model.window_loss(tape, w, &terms[j]);
            tape.backward(loss);
            grads[j] = tape.collect_grads(model.params());
            ok[j] = true;
        };

        if (nb == 1) {
            run_window(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(nb);
            for (std::size_t j = 0; j < nb; ++j) pool.emplace_back(run_window, j);
            for (auto& th : pool) th.join();
        }

        ad::GradMap merged;
        TraceEntry entry{epoch_index, batch_index, 0.0, 0.0, 0.0};
        bool any = false;
        for (std::size_t j = 0; j < nb; ++j) {  // window order, deterministic
            if (!ok[j]) {
                ++res.skipped_windows;
                continue;
            }
            ad::merge_grads(merged, grads[j]);
            entry.time_nll += terms[j].time_nll;
            entry.entity_nll += terms[j].entity_nll;
            entry.total += terms[j].total;
            any = true;
        }
        if (!any) continue;
        ad::clip_global_norm(merged, cfg.clip_norm);
        ad::adam_step(model.params(), merged, adam);
        res.total_loss += entry.total;
        res.trace.push_back(entry);
    }
    return res;
}

std::vector<TraceEntry> train(
    TrainableModel& model, const std::vector<Window>& windows,
    const TrainConfig& cfg,
    const std::function<void(std::size_t, const EpochResult&)>& on_epoch) {
    std::vector<TraceEntry> all;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochResult res = train_epoch(model, windows, cfg, e);
        all.insert(all.end(), res.trace.begin(), res.trace.end());
        if (on_epoch) on_epoch(e, res);
    }
    return all;
}

double mean_lambda_on_windows(ForecastModel& model,
                              const std::vector<Window>& windows) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const Window& w : windows) {
        if (w.truth.empty()) continue;
        model.begin(w);
        for (const Event& e : w.truth) {
            sum += model.observe(e).lambda_total;
            ++n;
        }
    }
    if (n == 0) throw DataError("mean_lambda_on_windows: no steps");
    return sum / static_cast<double>(n);
}

}  // namespace cep3
