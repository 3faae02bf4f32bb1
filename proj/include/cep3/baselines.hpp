#pragma once

#include <map>
#include <memory>

#include "cep3/model.hpp"

namespace cep3 {

using PairKey = std::pair<NodeId, NodeId>;  // ordered (source, dest)

// --- classical point-process baselines ---------------------------------

struct PoissonModel {
    std::vector<NodeId> community;            // sorted
    std::map<PairKey, double> rates;          // MLE count / timespan
    double default_rate = 0.0;                // additive smoothing for unseen pairs
    double rate(NodeId u, NodeId v) const;
    double lambda_total() const;
};

// lambda_{u,v} = count(u,v)/t_span; unseen pairs get 0.5/(|C|^2 t_span).
PoissonModel fit_poisson(const std::vector<Event>& train, double t_span,
                         const std::vector<NodeId>& community);

struct HawkesPair {
    double mu = 0.0;
    double alpha = 0.0;
};

struct HawkesModel {
    std::vector<NodeId> community;
    std::map<PairKey, HawkesPair> pairs;
    double beta = 1.0;
    double default_mu = 0.0;
    bool converged = true;
    HawkesPair pair(NodeId u, NodeId v) const;
};

// Exact NLL of a single-pair Hawkes process with kernel alpha*beta*e^(-beta t)
// over [0, t_end], via the exponential-kernel recursion.
double hawkes_pair_nll(const std::vector<double>& times, double mu, double alpha,
                       double beta, double t_end);

// Per-pair MLE by projected gradient descent with backtracking; beta fixed.
// fix_alpha_zero reduces to the Poisson MLE.
HawkesModel fit_hawkes(const std::vector<Event>& train, double t_span,
                       const std::vector<NodeId>& community, double beta = 1.0,
                       bool fix_alpha_zero = false, std::size_t max_iters = 2000);

class PoissonForecast final : public ForecastModel {
  public:
    explicit PoissonForecast(PoissonModel m) : m_(std::move(m)) {}
    void begin(const Window& w) override;
    StepProbe observe(const Event& truth) override;
    ForecastStep predict(DtMode mode, std::mt19937_64* rng) override;
    const PoissonModel& model() const { return m_; }

  private:
    PoissonModel m_;
    double current_t_ = 0.0;
};

class HawkesForecast final : public ForecastModel {
  public:
    explicit HawkesForecast(HawkesModel m) : m_(std::move(m)) {}
    void begin(const Window& w) override;
    StepProbe observe(const Event& truth) override;
    ForecastStep predict(DtMode mode, std::mt19937_64* rng) override;

  private:
    void decay_to(double t);
    double pair_intensity(NodeId u, NodeId v) const;
    double total_intensity() const;

    HawkesModel m_;
    std::map<PairKey, double> excitation_;  // decayed sum of kernel terms
    double current_t_ = 0.0;
};

// --- neural sequence baselines ------------------------------------------

struct RmtppConfig {
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 32;
    bool hierarchical = false;  // true: chained source/dest heads
    std::size_t max_pairs = 1u << 20;
};

// Recurrent MTPP over the flattened community event sequence. Markers are
// ordered node pairs (plain) or chained source/dest heads. The
// intensity is the exponential family lambda*(d) = exp(a + w d).
class RmtppModel final : public ForecastModel, public TrainableModel {
  public:
    RmtppModel(RmtppConfig cfg, std::vector<NodeId> community, std::uint64_t seed);

    ad::ParameterSet& params() override { return ps_; }
    const ad::ParameterSet& params() const override { return ps_; }
    ad::Var window_loss(ad::Tape& t, const Window& w,
                        LossTerms* terms) const override;

    void begin(const Window& w) override;
    StepProbe observe(const Event& truth) override;
    ForecastStep predict(DtMode mode, std::mt19937_64* rng) override;

    OpCounter& counter() { return counter_; }

    // Closed-form mean of the RMTPP inter-event density, exposed so tests
    // can cross-check it against quadrature.
    double debug_expected_dt(double a, double w) const { return expected_dt(a, w); }

  private:
    ad::Var input_row(ad::Tape& t, NodeId u, NodeId v, double dt) const;
    std::pair<ad::Var, ad::Var> time_params(ad::Tape& t, ad::Var h) const;
    double expected_dt(double a, double w) const;

    RmtppConfig cfg_;
    std::vector<NodeId> community_;
    ad::ParameterSet ps_;
    mutable OpCounter counter_;
    ad::Tensor h_state_;
    double current_t_ = 0.0;
};

struct GruGaussianConfig {
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 32;
};

// Seq2seq GRU with a Gaussian (mean, log-variance) time head and categorical
// source/dest heads.
class GruGaussianModel final : public ForecastModel, public TrainableModel {
  public:
    GruGaussianModel(GruGaussianConfig cfg, std::vector<NodeId> community,
                     std::uint64_t seed);

    ad::ParameterSet& params() override { return ps_; }
    const ad::ParameterSet& params() const override { return ps_; }
    ad::Var window_loss(ad::Tape& t, const Window& w,
                        LossTerms* terms) const override;

    void begin(const Window& w) override;
    StepProbe observe(const Event& truth) override;
    ForecastStep predict(DtMode mode, std::mt19937_64* rng) override;

  private:
    ad::Var input_row(ad::Tape& t, NodeId u, NodeId v, double dt) const;

    GruGaussianConfig cfg_;
    std::vector<NodeId> community_;
    ad::ParameterSet ps_;
    ad::Tensor h_state_;
    double current_t_ = 0.0;
};

// Dispatches begin/observe/predict to a per-community model; classical and
// recurrent baselines are fitted per community.
class PerCommunityModel final : public ForecastModel {
  public:
    void set(int community_id, std::unique_ptr<ForecastModel> m) {
        models_[community_id] = std::move(m);
    }
    ForecastModel& at(int community_id) { return *models_.at(community_id); }
    void begin(const Window& w) override {
        current_ = models_.at(w.community_id).get();
        current_->begin(w);
    }
    StepProbe observe(const Event& truth) override { return current_->observe(truth); }
    ForecastStep predict(DtMode mode, std::mt19937_64* rng) override {
        return current_->predict(mode, rng);
    }

  private:
    std::map<int, std::unique_ptr<ForecastModel>> models_;
    ForecastModel* current_ = nullptr;
};

void write_poisson_csv(const PoissonModel& m, std::ostream& out);
void write_hawkes_csv(const HawkesModel& m, std::ostream& out);

}  // namespace cep3
