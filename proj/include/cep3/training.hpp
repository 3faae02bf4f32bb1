#pragma once

#include <functional>

#include "cep3/model.hpp"

namespace cep3 {

struct TrainConfig {
    std::size_t epochs = 100;
    double lr = 1e-4;
    std::size_t window_k = 200;
    std::size_t stride = 0;          // 0 -> window_k (non-overlapping)
    std::size_t parallel_windows = 1;
    double clip_norm = 5.0;
    std::uint64_t seed = 0;
};

struct TraceEntry {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double time_nll = 0.0;
    double entity_nll = 0.0;
    double total = 0.0;
};

// Restricts the stream to events inside each community, then cuts
// consecutive K-event windows with the given stride. A community with fewer
// than K events yields one shorter window; empty communities yield none.
std::vector<Window> make_windows(const EventStream& split,
                                 const CommunityAssignment& communities,
                                 std::size_t k, std::size_t stride = 0);

struct EpochResult {
    std::vector<TraceEntry> trace;
    double total_loss = 0.0;   // summed over batches
    std::size_t skipped_windows = 0;
};

// One pass over the windows: per batch of `parallel_windows`, run each
// window's tape (concurrently when > 1), merge gradients in window order,
// clip, and take one Adam step.
EpochResult train_epoch(TrainableModel& model, const std::vector<Window>& windows,
                        const TrainConfig& cfg, std::size_t epoch_index);

// Full loop with a per-epoch callback (epoch, result).
std::vector<TraceEntry> train(
    TrainableModel& model, const std::vector<Window>& windows,
    const TrainConfig& cfg,
    const std::function<void(std::size_t, const EpochResult&)>& on_epoch = {});

// Mean lambda_total over all teacher-forced steps of the given windows.
double mean_lambda_on_windows(ForecastModel& model,
                              const std::vector<Window>& windows);

}  // namespace cep3
