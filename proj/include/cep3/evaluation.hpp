#pragma once

#include <iosfwd>
#include <map>
#include <optional>

#include "cep3/model.hpp"

namespace cep3 {

struct CommunityMetrics {
    double pp = 0.0;
    std::optional<double> mae;  // unset when the window is degenerate
    std::size_t k_effective = 0;
};

struct MetricReport {
    std::map<int, CommunityMetrics> per_community;
    double mean_pp = 0.0;
    double mean_mae = 0.0;
    std::size_t mae_communities = 0;   // communities contributing to mean_mae
    std::size_t floor_hits = 0;        // probability-floor triggers during PP
    std::string model_id;
    std::string split;
    std::uint64_t seed = 0;
};

// exp(-(1/K) sum [log p(u_i) + log p(v_i|u_i)]), probabilities floored at
// 1e-12; floor_hits counts floored terms when given.
double perplexity(const std::vector<StepProbe>& probes,
                  std::size_t* floor_hits = nullptr);

// (1/(K (t_K - t_0))) sum |t_i - min(t_K, t_hat_i)| over cumulative predicted
// times. Returns nothing for the degenerate window t_K == t_0.
std::optional<double> mae(const std::vector<double>& truth_times,
                          const std::vector<double>& predicted_times, double t0);

// PP under teacher forcing and MAE under a free-running greedy rollout, per
// community and then averaged. Communities with no test events are skipped;
// those with t_K == t_0 are excluded from the MAE average only.
MetricReport evaluate_model(ForecastModel& model, const std::vector<Window>& windows,
                            DtMode dt_mode = DtMode::Mean,
                            std::mt19937_64* rng = nullptr);

void write_report_json(const MetricReport& r, std::ostream& out);
void write_report_csv(const MetricReport& r, std::ostream& out);

}  // namespace cep3
