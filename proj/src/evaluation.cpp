#include "cep3/evaluation.hpp"

#include <cmath>
#include <ostream>

#include "json.hpp"

namespace cep3 {

double perplexity(const std::vector<StepProbe>& probes, std::size_t* floor_hits) {
    if (probes.empty()) throw DataError("perplexity: no steps");
    double sum = 0.0;
    for (const StepProbe& p : probes) {
        double pu = p.p_source, pv = p.p_dest;
        if (pu < 1e-12) {
            pu = 1e-12;
            if (floor_hits) ++*floor_hits;
        }
        if (pv < 1e-12) {
            pv = 1e-12;
            if (floor_hits) ++*floor_hits;
        }
        sum += std::log(pu) + std::log(pv);
    }
    return std::exp(-sum / static_cast<double>(probes.size()));
}

std::optional<double> mae(const std::vector<double>& truth_times,
                          const std::vector<double>& predicted_times, double t0) {
    if (truth_times.empty() || truth_times.size() != predicted_times.size())
        throw DataError("mae: size mismatch");
    const double t_k = truth_times.back();
    if (!(t_k > t0)) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < truth_times.size(); ++i)
        sum += std::abs(truth_times[i] - std::min(t_k, predicted_times[i]));
    return sum / (static_cast<double>(truth_times.size()) * (t_k - t0));
}

MetricReport evaluate_model(ForecastModel& model, const std::vector<Window>& windows,
                            DtMode dt_mode, std::mt19937_64* rng) {
    MetricReport report;
    // per community: accumulated probes for PP, (mae_sum, mae_count) for MAE
    std::map<int, std::vector<StepProbe>> probes;
    std::map<int, std::pair<double, std::size_t>> mae_acc;
    std::map<int, std::size_t> k_eff;

    for (const Window& w : windows) {
        if (w.truth.empty()) continue;
        model.begin(w);
        for (const Event& e : w.truth) probes[w.community_id].push_back(model.observe(e));
        k_eff[w.community_id] += w.truth.size();

        model.begin(w);
        std::vector<double> truth_t, pred_t;
        truth_t.reserve(w.truth.size());
        pred_t.reserve(w.truth.size());
        for (const Event& e : w.truth) {
            truth_t.push_back(e.time);
            pred_t.push_back(model.predict(dt_mode, rng).t_abs);
        }
        if (auto m = mae(truth_t, pred_t, w.t_n)) {
            auto& [s, c] = mae_acc[w.community_id];
            s += *m;
            c += 1;
        }
    }

    double pp_sum = 0.0, mae_sum = 0.0;
    std::size_t mae_n = 0;
    for (auto& [cid, ps] : probes) {
        CommunityMetrics cm;
        cm.pp = perplexity(ps, &report.floor_hits);
        cm.k_effective = k_eff[cid];
        auto it = mae_acc.find(cid);
        if (it != mae_acc.end() && it->second.second > 0) {
            cm.mae = it->second.first / static_cast<double>(it->second.second);
            mae_sum += *cm.mae;
            ++mae_n;
        }
        pp_sum += cm.pp;
        report.per_community[cid] = cm;
    }
    if (!report.per_community.empty())
        report.mean_pp = pp_sum / static_cast<double>(report.per_community.size());
    report.mae_communities = mae_n;
    if (mae_n > 0) report.mean_mae = mae_sum / static_cast<double>(mae_n);
    return report;
}

void write_report_json(const MetricReport& r, std::ostream& out) {
    nlohmann::json j;
    j["model"] = r.model_id;
    j["split"] = r.split;
    j["seed"] = r.seed;
    j["mean_pp"] = r.mean_pp;
    j["mean_mae"] = r.mean_mae;
    j["mae_communities"] = r.mae_communities;
    j["floor_hits"] = r.floor_hits;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [cid, cm] : r.per_community) {
        nlohmann::json e;
        e["pp"] = cm.pp;
        if (cm.mae) e["mae"] = *cm.mae;
        e["k_effective"] = cm.k_effective;
        per[std::to_string(cid)] = e;
    }
    j["per_community"] = per;
    out << j.dump(2) << "\n";
}

void write_report_csv(const MetricReport& r, std::ostream& out) {
    out << "community,pp,mae,k_effective\n";
    out.precision(17);
    for (const auto& [cid, cm] : r.per_community) {
        out << cid << "," << cm.pp << ",";
        if (cm.mae) out << *cm.mae;
        out << "," << cm.k_effective << "\n";
    }
    out << "mean," << r.mean_pp << "," << r.mean_mae << ",\n";
}

}  // namespace cep3
