#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cep3 {

using NodeId = std::int64_t;

struct Event {
    NodeId source = 0;
    NodeId dest = 0;
    double time = 0.0;
    std::vector<double> features;
};

// Affine map applied to raw input timestamps: t' = (t - offset) * factor.
struct TimeScale {
    double offset = 0.0;
    double factor = 1.0;
    double apply(double t) const { return (t - offset) * factor; }
    double invert(double t) const { return t / factor + offset; }
    bool identity() const { return offset == 0.0 && factor == 1.0; }
};

struct EventStream {
    std::vector<Event> events;        // sorted non-decreasing by time
    NodeId node_count = 0;
    std::size_t feature_dim = 0;
    std::vector<NodeId> original_ids; // compact id -> id as ingested
    TimeScale scale;                  // transform already applied to times

    bool empty() const { return events.empty(); }
    std::size_t size() const { return events.size(); }
    double t_min() const { return events.front().time; }
    double t_max() const { return events.back().time; }
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CSV `source,dest,time[,f0,f1,...]` with header. Ids are compacted to
// 0..node_count-1 (mapping kept in original_ids); rows are stable-sorted
// by time.
EventStream ingest_events(std::istream& in);
EventStream ingest_events_file(const std::string& path);
void write_events_csv(const EventStream& s, std::ostream& out);
void write_events_csv_file(const EventStream& s, const std::string& path);

struct SplitSpec {
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    void validate() const;
};

struct SplitResult {
    EventStream train, val, test;
    std::size_t train_end = 0, val_end = 0;  // boundary indices into the stream
};

SplitResult chronological_split(const EventStream& stream, const SplitSpec& spec);

// Builds the 10-dim history features of events without features:
// [deg(u), deg(v), du_days, du_hours, du_min, du_sec, dv_days, ...].
EventStream synthesize_edge_features(const EventStream& stream);

// Affine-rescales timestamps to [lo, hi]; the applied transform is recorded
// in the result's TimeScale (composed with any prior one).
EventStream rescale_times(const EventStream& stream, double lo = 0.0,
                          double hi = 1000.0);

// Time-sorted per-node incidence index over an EventStream.
class TemporalGraph {
  public:
    struct Incidence {
        NodeId neighbor;
        double time;
        std::size_t event_index;
    };

    explicit TemporalGraph(const EventStream& stream);

    const EventStream& stream() const { return *stream_; }
    NodeId node_count() const { return static_cast<NodeId>(adj_.size()); }
    const std::vector<Incidence>& incident(NodeId v) const { return adj_[v]; }

    // Up to `fanout` most recent incidences of `v` strictly before t_src.
    std::vector<Incidence> recent_before(NodeId v, double t_src,
                                         std::size_t fanout) const;
    // Seeded uniform sample instead of most-recent-first.
    std::vector<Incidence> uniform_before(NodeId v, double t_src,
                                          std::size_t fanout,
                                          std::mt19937_64& rng) const;

  private:
    const EventStream* stream_;
    std::vector<std::vector<Incidence>> adj_;
};

struct SampledNeighbor {
    NodeId anchor;     // node whose neighborhood produced this entry
    NodeId neighbor;
    double dt;         // t_src - event time, > 0
    std::size_t event_index;
};

// Layered k-hop sample; every hop is bounded by the original t_src.
// layers[k] holds the hop-(k+1) events. Most-recent-first selection unless
// an RNG is supplied.
std::vector<std::vector<SampledNeighbor>> temporal_neighbors(
    const TemporalGraph& graph, NodeId node, double t_src, std::size_t hops,
    std::size_t fanout, std::mt19937_64* rng = nullptr);

struct CommunityAssignment {
    std::map<NodeId, int> community_of;
    std::vector<std::vector<NodeId>> communities;  // each sorted ascending
};

void write_communities_csv(const CommunityAssignment& a, std::ostream& out);
CommunityAssignment read_communities_csv(std::istream& in);

// Louvain on the count-weighted static projection of the stream.
// Deterministic: ascending-id sweeps, modularity ties broken toward the
// lowest community id, iterate until no gain above 1e-12.
CommunityAssignment detect_communities_louvain(const EventStream& stream);

// Weighted undirected graph used by Louvain and its tests.
struct WeightedGraph {
    std::size_t n = 0;
    std::map<std::pair<NodeId, NodeId>, double> weights;  // key normalized u<=v
    void add_edge(NodeId u, NodeId v, double w);
    double total_weight() const;  // sum of edge weights, self-loops once
};

WeightedGraph static_projection(const EventStream& stream);
CommunityAssignment louvain(const WeightedGraph& g);
double modularity(const WeightedGraph& g, const std::vector<int>& comm_of);

}  // namespace cep3
