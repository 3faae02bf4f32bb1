#pragma once

#include <memory>
#include <random>

#include "cep3/ar_update.hpp"
#include "cep3/forecaster.hpp"

namespace cep3 {

// One community window: K ground-truth events after horizon t_n, all with
// both endpoints in `community`.
struct Window {
    int community_id = 0;
    std::vector<NodeId> community;  // sorted ascending
    double t_n = 0.0;
    std::vector<Event> truth;
};

struct LossTerms {
    double time_nll = 0.0;
    double entity_nll = 0.0;
    double total = 0.0;
    std::vector<std::pair<double, double>> per_step;  // (time, entity)
};

// Per-step NLL contribution with first-order survival lambda*dt.
// Probabilities are floored at 1e-12 inside the logs.
LossTerms step_loss(double lambda_total, double dt_true, double p_u, double p_v);

// What a model reports about one ground-truth event under teacher forcing.
struct StepProbe {
    double p_source = 0.0;        // p(u_true | dt_true)
    double p_dest = 0.0;          // p(v_true | dt_true, u_true)
    double lambda_total = 0.0;
    double dt_pred = 0.0;         // point prediction before seeing the truth
};

// Evaluation-facing interface shared by CEP3 and every baseline.
class ForecastModel {
  public:
    virtual ~ForecastModel() = default;
    // Initializes internal states for a window's community and horizon.
    virtual void begin(const Window& w) = 0;
    // Teacher-forced step: return probabilities at the truth, then absorb it.
    virtual StepProbe observe(const Event& truth) = 0;
    // Free-running greedy step; absorbs its own prediction.
    virtual ForecastStep predict(DtMode mode = DtMode::Mean,
                                 std::mt19937_64* rng = nullptr) = 0;
};

std::vector<ForecastStep> rollout(ForecastModel& model, std::size_t steps,
                                  DtMode mode = DtMode::Mean,
                                  std::mt19937_64* rng = nullptr);

// Training-facing interface: a differentiable per-window loss.
class TrainableModel {
  public:
    virtual ~TrainableModel() = default;
    virtual ad::ParameterSet& params() = 0;
    virtual const ad::ParameterSet& params() const = 0;
    virtual ad::Var window_loss(ad::Tape& t, const Window& w,
                                LossTerms* terms) const = 0;
};

struct Cep3Config {
    EncoderConfig enc;
    ForecasterConfig fc;
    UpdateConfig upd;
    bool hierarchical = true;        // false -> joint O(|C|^2) head
    enum class ArMode { Full, IncidentOnly } ar = ArMode::Full;
    bool strict_first_dt = false;    // feed the window's first dt to every GRU step
    std::size_t rollout_hops = 2;    // L for the initial rollout connectivity

    // Keeps the shared dimensions consistent across submodules.
    void sync() {
        fc.hidden_dim = enc.hidden_dim;
        fc.d_time = enc.d_time;
        upd.hidden_dim = enc.hidden_dim;
        upd.d_time = enc.d_time;
    }
};

class Cep3Model final : public ForecastModel, public TrainableModel {
  public:
    Cep3Model(Cep3Config cfg, std::uint64_t seed, std::size_t feature_dim);

    void attach(const TemporalGraph& graph) { graph_ = &graph; }
    const Cep3Config& config() const { return cfg_; }
    OpCounter& counter() { return counter_; }

    ad::ParameterSet& params() override { return ps_; }
    const ad::ParameterSet& params() const override { return ps_; }

    ad::Var window_loss(ad::Tape& t, const Window& w,
                        LossTerms* terms) const override;

    void begin(const Window& w) override;
    StepProbe observe(const Event& truth) override;
    ForecastStep predict(DtMode mode = DtMode::Mean,
                         std::mt19937_64* rng = nullptr) override;

    // Distributions at the current state, for export and tests.
    std::vector<double> current_source_probs(double dt);
    std::vector<double> current_dest_probs(std::size_t source_index, double dt);
    std::vector<double> current_joint_probs(double dt);
    double current_lambda_total();

  private:
    std::vector<ad::Var> states_from_values(ad::Tape& t) const;
    void absorb(const std::vector<ad::Var>& updated, const ad::Tape& t);
    void advance(NodeId u, NodeId v, double dt, double t_new);

    Cep3Config cfg_;
    std::size_t feature_dim_;
    ad::ParameterSet ps_;
    const TemporalGraph* graph_ = nullptr;
    mutable OpCounter counter_;

    // Rollout state used by the evaluation interface.
    std::unique_ptr<RolloutGraph> roll_;
    std::vector<ad::Tensor> state_vals_;
    std::vector<NodeId> candidates_;
    double current_t_ = 0.0;
    double first_dt_ = -1.0;
};

}  // namespace cep3
