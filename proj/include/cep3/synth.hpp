#pragma once

#include <iosfwd>
#include <map>

#include "cep3/ctdg.hpp"

namespace cep3 {

struct PairProcess {
    enum class Kind { Poisson, Hawkes } kind = Kind::Poisson;
    double lambda = 0.0;  // Poisson rate
    double mu = 0.0;      // Hawkes baseline
    double alpha = 0.0;   // Hawkes jump (stability needs alpha < beta)
    double beta = 1.0;    // Hawkes decay
};

struct GroundTruthSpec {
    std::size_t node_count = 0;
    std::map<std::pair<NodeId, NodeId>, PairProcess> pairs;
    double horizon = 0.0;
    std::uint64_t seed = 0;
};

struct SimStats {
    std::uint64_t thinning_proposals = 0;
    std::uint64_t thinning_accepts = 0;
};

// Per-pair simulation with splitmix-derived seeds; streams merged and sorted.
// Poisson pairs draw i.i.d. exponential gaps; Hawkes pairs use Ogata thinning
// against the decaying exponential-kernel bound.
EventStream simulate(const GroundTruthSpec& spec, SimStats* stats = nullptr);

// Exact NLL of the stream under the ground-truth intensities (closed form for
// Poisson, exponential-kernel recursion for Hawkes).
double oracle_nll(const GroundTruthSpec& spec, const std::vector<Event>& stream);

// Two dense 6-node communities (nodes 0-5 and 6-11) with zero cross rates.
GroundTruthSpec two_community_poisson(double rate, double horizon,
                                      std::uint64_t seed);
GroundTruthSpec two_community_hawkes(double mu, double alpha, double beta,
                                     double horizon, std::uint64_t seed);

void write_spec_json(const GroundTruthSpec& spec, std::ostream& out);
GroundTruthSpec read_spec_json(std::istream& in);

}  // namespace cep3
