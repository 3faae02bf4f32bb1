#include "cep3/ctdg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace cep3 {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double(const std::string& s, std::size_t line_no, const char* what) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": malformed " +
                        what + " '" + s + "'");
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) pos++;
    if (pos != s.size())
        throw DataError("line " + std::to_string(line_no) + ": malformed " +
                        what + " '" + s + "'");
    return v;
}

NodeId parse_id(const std::string& s, std::size_t line_no, const char* what) {
    std::size_t pos = 0;
    long long v;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": malformed " +
                        what + " '" + s + "'");
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) pos++;
    if (pos != s.size())
        throw DataError("line " + std::to_string(line_no) + ": malformed " +
                        what + " '" + s + "'");
    if (v < 0)
        throw DataError("line " + std::to_string(line_no) + ": negative " + what);
    return v;
}

}  // namespace

EventStream ingest_events(std::istream& in) {
    EventStream out;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty input: missing header");
    std::size_t line_no = 1;

    std::vector<Event> raw;
    std::optional<std::size_t> feat_dim;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto fields = split_csv_line(line);
        if (fields.size() < 3)
            throw DataError("line " + std::to_string(line_no) +
                            ": expected at least source,dest,time");
        Event e;
        e.source = parse_id(fields[0], line_no, "source id");
        e.dest = parse_id(fields[1], line_no, "dest id");
        e.time = parse_double(fields[2], line_no, "time");
        if (!std::isfinite(e.time) || e.time < 0.0)
            throw DataError("line " + std::to_string(line_no) + ": negative time");
        const std::size_t nf = fields.size() - 3;
        if (!feat_dim) feat_dim = nf;
        if (*feat_dim != nf)
            throw DataError("line " + std::to_string(line_no) +
                            ": inconsistent feature arity (" + std::to_string(nf) +
                            " vs " + std::to_string(*feat_dim) + ")");
        e.features.reserve(nf);
        for (std::size_t i = 0; i < nf; ++i)
            e.features.push_back(parse_double(fields[3 + i], line_no, "feature"));
        raw.push_back(std::move(e));
    }

    std::stable_sort(raw.begin(), raw.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });

    // Compact ids in first-appearance order after sorting.
    std::unordered_map<NodeId, NodeId> compact;
    for (Event& e : raw) {
        for (NodeId* id : {&e.source, &e.dest}) {
            auto it = compact.find(*id);
            if (it == compact.end()) {
                NodeId c = static_cast<NodeId>(compact.size());
                compact.emplace(*id, c);
                out.original_ids.push_back(*id);
                *id = c;
            } else {
                *id = it->second;
            }
        }
    }
    out.events = std::move(raw);
    out.node_count = static_cast<NodeId>(compact.size());
    out.feature_dim = feat_dim.value_or(0);
    return out;
}

EventStream ingest_events_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return ingest_events(in);
}

void write_events_csv(const EventStream& s, std::ostream& out) {
    out << "source,dest,time";
    for (std::size_t i = 0; i < s.feature_dim; ++i) out << ",f" << i;
    out << "\n";
    out.precision(17);
    for (const Event& e : s.events) {
        out << e.source << "," << e.dest << "," << e.time;
        for (double f : e.features) out << "," << f;
        out << "\n";
    }
}

void write_events_csv_file(const EventStream& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path);
    write_events_csv(s, out);
}

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0)
        throw DataError("split fractions must be non-negative");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw DataError("split fractions must sum to 1");
}

SplitResult chronological_split(const EventStream& stream, const SplitSpec& spec) {
    spec.validate();
    if (stream.empty()) throw DataError("chronological_split: empty stream");
    const std::size_t n = stream.size();
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(n)));
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    SplitResult r;
    r.train_end = n_train;
    r.val_end = n_train + n_val;
    auto sub = [&](std::size_t lo, std::size_t hi) {
        EventStream s;
        s.events.assign(stream.events.begin() + static_cast<std::ptrdiff_t>(lo),
                        stream.events.begin() + static_cast<std::ptrdiff_t>(hi));
        s.node_count = stream.node_count;
        s.feature_dim = stream.feature_dim;
        s.original_ids = stream.original_ids;
        s.scale = stream.scale;
        return s;
    };
    r.train = sub(0, r.train_end);
    r.val = sub(r.train_end, r.val_end);
    r.test = sub(r.val_end, n);
    return r;
}

namespace {
// Mixed-radix days/hours/minutes/seconds; the seconds slot keeps the real
// remainder.
void decompose_duration(double dt, double* out4) {
    double days = std::floor(dt / 86400.0);
    dt -= days * 86400.0;
    double hours = std::floor(dt / 3600.0);
    dt -= hours * 3600.0;
    double minutes = std::floor(dt / 60.0);
    dt -= minutes * 60.0;
    out4[0] = days;
    out4[1] = hours;
    out4[2] = minutes;
    out4[3] = dt;
}
}  // namespace

EventStream synthesize_edge_features(const EventStream& stream) {
    if (stream.feature_dim != 0)
        throw DataError("synthesize_edge_features: stream already has features");
    EventStream out = stream;
    out.feature_dim = 10;
    std::vector<std::size_t> degree(static_cast<std::size_t>(stream.node_count), 0);
    std::vector<double> last_seen(static_cast<std::size_t>(stream.node_count), -1.0);
    for (Event& e : out.events) {
        const auto u = static_cast<std::size_t>(e.source);
        const auto v = static_cast<std::size_t>(e.dest);
        const double du = last_seen[u] < 0.0 ? 0.0 : e.time - last_seen[u];
        const double dv = last_seen[v] < 0.0 ? 0.0 : e.time - last_seen[v];
        e.features.assign(10, 0.0);
        e.features[0] = static_cast<double>(degree[u]);
        e.features[1] = static_cast<double>(degree[v]);
        decompose_duration(du, &e.features[2]);
        decompose_duration(dv, &e.features[6]);
        degree[u] += 1;
        degree[v] += 1;
        last_seen[u] = e.time;
        last_seen[v] = e.time;
    }
    return out;
}

EventStream rescale_times(const EventStream& stream, double lo, double hi) {
    if (stream.empty()) throw DataError("rescale_times: empty stream");
    EventStream out = stream;
    const double t0 = stream.t_min();
    const double span = stream.t_max() - t0;
    const double factor = span > 0.0 ? (hi - lo) / span : 1.0;
    for (Event& e : out.events) e.time = lo + (e.time - t0) * factor;
    // Composed transform relative to the raw (pre-scale) times.
    out.scale.factor = stream.scale.factor * factor;
    out.scale.offset = stream.scale.offset + (t0 - lo / factor) / stream.scale.factor;
    return out;
}

TemporalGraph::TemporalGraph(const EventStream& stream) : stream_(&stream) {
    adj_.resize(static_cast<std::size_t>(stream.node_count));
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        adj_[static_cast<std::size_t>(e.source)].push_back({e.dest, e.time, i});
        if (e.dest != e.source)
            adj_[static_cast<std::size_t>(e.dest)].push_back({e.source, e.time, i});
    }
    // Events are already time-sorted so the per-node lists are too.
}

std::vector<TemporalGraph::Incidence> TemporalGraph::recent_before(
    NodeId v, double t_src, std::size_t fanout) const {
    const auto& lst = adj_[static_cast<std::size_t>(v)];
    auto hi = std::lower_bound(lst.begin(), lst.end(), t_src,
                               [](const Incidence& a, double t) { return a.time < t; });
    std::size_t n = static_cast<std::size_t>(hi - lst.begin());
    std::size_t k = std::min(fanout, n);
    std::vector<Incidence> out(lst.begin() + static_cast<std::ptrdiff_t>(n - k),
                               lst.begin() + static_cast<std::ptrdiff_t>(n));
    std::reverse(out.begin(), out.end());  // most recent first
    return out;
}

std::vector<TemporalGraph::Incidence> TemporalGraph::uniform_before(
    NodeId v, double t_src, std::size_t fanout, std::mt19937_64& rng) const {
    const auto& lst = adj_[static_cast<std::size_t>(v)];
    auto hi = std::lower_bound(lst.begin(), lst.end(), t_src,
                               [](const Incidence& a, double t) { return a.time < t; });
    std::size_t n = static_cast<std::size_t>(hi - lst.begin());
    if (n <= fanout) {
        std::vector<Incidence> out(lst.begin(), hi);
        std::reverse(out.begin(), out.end());
        return out;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < fanout; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, n - 1);
        std::swap(idx[i], idx[d(rng)]);
    }
    std::vector<Incidence> out;
    out.reserve(fanout);
    for (std::size_t i = 0; i < fanout; ++i) out.push_back(lst[idx[i]]);
    std::sort(out.begin(), out.end(),
              [](const Incidence& a, const Incidence& b) { return a.time > b.time; });
    return out;
}

std::vector<std::vector<SampledNeighbor>> temporal_neighbors(
    const TemporalGraph& graph, NodeId node, double t_src, std::size_t hops,
    std::size_t fanout, std::mt19937_64* rng) {
    if (hops < 1 || fanout < 1)
        throw DataError("temporal_neighbors: hops and fanout must be >= 1");
    std::vector<std::vector<SampledNeighbor>> layers(hops);
    std::vector<NodeId> frontier{node};
    for (std::size_t h = 0; h < hops; ++h) {
        std::vector<NodeId> next;
        for (NodeId anchor : frontier) {
            auto inc = rng ? graph.uniform_before(anchor, t_src, fanout, *rng)
                           : graph.recent_before(anchor, t_src, fanout);
            for (const auto& e : inc) {
                layers[h].push_back({anchor, e.neighbor, t_src - e.time, e.event_index});
                next.push_back(e.neighbor);
            }
        }
        frontier = std::move(next);
    }
    return layers;
}

void write_communities_csv(const CommunityAssignment& a, std::ostream& out) {
    out << "node,community\n";
    for (const auto& [node, c] : a.community_of) out << node << "," << c << "\n";
}

CommunityAssignment read_communities_csv(std::istream& in) {
    CommunityAssignment a;
    std::string line;
    if (!std::getline(in, line)) throw DataError("communities csv: missing header");
    std::size_t line_no = 1;
    int max_c = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.back() == '\r') line.pop_back();
        auto fields = split_csv_line(line);
        if (fields.size() != 2)
            throw DataError("communities csv line " + std::to_string(line_no));
        NodeId node = parse_id(fields[0], line_no, "node");
        int c = static_cast<int>(parse_id(fields[1], line_no, "community"));
        a.community_of[node] = c;
        max_c = std::max(max_c, c);
    }
    a.communities.assign(static_cast<std::size_t>(max_c + 1), {});
    for (const auto& [node, c] : a.community_of)
        a.communities[static_cast<std::size_t>(c)].push_back(node);
    for (auto& comm : a.communities) std::sort(comm.begin(), comm.end());
    return a;
}

void WeightedGraph::add_edge(NodeId u, NodeId v, double w) {
    if (u > v) std::swap(u, v);
    weights[{u, v}] += w;
    n = std::max(n, static_cast<std::size_t>(v) + 1);
}

double WeightedGraph::total_weight() const {
    double s = 0.0;
    for (const auto& [edge, w] : weights) s += w;
    return s;
}

WeightedGraph static_projection(const EventStream& stream) {
    WeightedGraph g;
    g.n = static_cast<std::size_t>(stream.node_count);
    for (const Event& e : stream.events) g.add_edge(e.source, e.dest, 1.0);
    return g;
}

double modularity(const WeightedGraph& g, const std::vector<int>& comm_of) {
    // Standard Newman modularity; self-loop weight contributes 2w to a
    // node's degree.
    double two_m = 0.0;
    std::vector<double> degree(g.n, 0.0);
    for (const auto& [edge, w] : g.weights) {
        degree[static_cast<std::size_t>(edge.first)] += w;
        degree[static_cast<std::size_t>(edge.second)] += w;
        two_m += 2.0 * w;
    }
    if (two_m == 0.0) return 0.0;
    double q = 0.0;
    for (const auto& [edge, w] : g.weights) {
        if (comm_of[static_cast<std::size_t>(edge.first)] ==
            comm_of[static_cast<std::size_t>(edge.second)]) {
            q += (edge.first == edge.second ? 2.0 * w : 2.0 * w) / two_m;
        }
    }
    std::map<int, double> comm_degree;
    for (std::size_t i = 0; i < g.n; ++i) comm_degree[comm_of[i]] += degree[i];
    for (const auto& [c, d] : comm_degree) q -= (d / two_m) * (d / two_m);
    return q;
}

namespace {

struct LouvainLevel {
    std::size_t n;
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;  // no self loops
    std::vector<double> self_loop;  // self-loop weight per node
};

LouvainLevel build_level(const WeightedGraph& g) {
    LouvainLevel lv;
    lv.n = g.n;
    lv.adj.resize(g.n);
    lv.self_loop.assign(g.n, 0.0);
    for (const auto& [edge, w] : g.weights) {
        auto u = static_cast<std::size_t>(edge.first);
        auto v = static_cast<std::size_t>(edge.second);
        if (u == v) {
            lv.self_loop[u] += w;
        } else {
            lv.adj[u].push_back({v, w});
            lv.adj[v].push_back({u, w});
        }
    }
    return lv;
}

// One Louvain pass: local moves until no positive gain, deterministic
// ascending sweep, ties toward the lowest community id.
bool local_moves(const LouvainLevel& lv, std::vector<int>& comm_of) {
    std::vector<double> degree(lv.n, 0.0);
    double two_m = 0.0;
    for (std::size_t u = 0; u < lv.n; ++u) {
        degree[u] = 2.0 * lv.self_loop[u];
        for (const auto& [v, w] : lv.adj[u]) degree[u] += w;
        two_m += degree[u];
    }
    if (two_m == 0.0) return false;
    std::vector<double> comm_degree(lv.n, 0.0);
    for (std::size_t u = 0; u < lv.n; ++u)
        comm_degree[static_cast<std::size_t>(comm_of[u])] += degree[u];

    bool any_move = false;
    bool improved = true;
    const double kGainTol = 1e-12;
    while (improved) {
        improved = false;
        for (std::size_t u = 0; u < lv.n; ++u) {
            const int cu = comm_of[u];
            std::map<int, double> links;  // weight from u into each community
            links[cu] += 0.0;
            for (const auto& [v, w] : lv.adj[u]) links[comm_of[v]] += w;
            comm_degree[static_cast<std::size_t>(cu)] -= degree[u];
            const double base = links[cu] - degree[u] *
                comm_degree[static_cast<std::size_t>(cu)] / two_m;
            int best_c = cu;
            double best_gain = 0.0;
            for (const auto& [c, w_in] : links) {
                if (c == cu) continue;
                const double gain = (w_in - degree[u] *
                    comm_degree[static_cast<std::size_t>(c)] / two_m) - base;
                if (gain > best_gain + kGainTol ||
                    (gain > best_gain - kGainTol && gain > kGainTol && c < best_c)) {
                    best_gain = gain;
                    best_c = c;
                }
            }
            comm_of[u] = best_c;
            comm_degree[static_cast<std::size_t>(best_c)] += degree[u];
            if (best_c != cu) {
                improved = true;
                any_move = true;
            }
        }
    }
    return any_move;
}

}  // namespace

CommunityAssignment louvain(const WeightedGraph& g) {
    std::vector<int> node_comm(g.n);
    for (std::size_t i = 0; i < g.n; ++i) node_comm[i] = static_cast<int>(i);

    WeightedGraph cur = g;
    std::vector<std::vector<std::size_t>> members(g.n);  // per current super-node
    for (std::size_t i = 0; i < g.n; ++i) members[i] = {i};

    while (true) {
        LouvainLevel lv = build_level(cur);
        std::vector<int> comm_of(lv.n);
        for (std::size_t i = 0; i < lv.n; ++i) comm_of[i] = static_cast<int>(i);
        if (!local_moves(lv, comm_of)) break;

        // Renumber communities by lowest contained super-node id.
        std::map<int, int> renum;
        for (std::size_t i = 0; i < lv.n; ++i)
            if (!renum.count(comm_of[i])) renum[comm_of[i]] = static_cast<int>(renum.size());
        for (std::size_t i = 0; i < lv.n; ++i) comm_of[i] = renum[comm_of[i]];
        const std::size_t nc = renum.size();

        // Aggregate graph and member lists.
        std::vector<std::vector<std::size_t>> new_members(nc);
        for (std::size_t i = 0; i < lv.n; ++i) {
            auto& dst = new_members[static_cast<std::size_t>(comm_of[i])];
            dst.insert(dst.end(), members[i].begin(), members[i].end());
        }
        WeightedGraph agg;
        agg.n = nc;
        for (const auto& [edge, w] : cur.weights) {
            NodeId cu = comm_of[static_cast<std::size_t>(edge.first)];
            NodeId cv = comm_of[static_cast<std::size_t>(edge.second)];
            agg.add_edge(cu, cv, w);
        }
        cur = std::move(agg);
        members = std::move(new_members);
        if (nc == lv.n) break;  // no aggregation progress
    }

    CommunityAssignment a;
    a.communities.resize(members.size());
    for (std::size_t c = 0; c < members.size(); ++c) {
        for (std::size_t node : members[c]) {
            a.community_of[static_cast<NodeId>(node)] = static_cast<int>(c);
            a.communities[c].push_back(static_cast<NodeId>(node));
        }
        std::sort(a.communities[c].begin(), a.communities[c].end());
    }
    // Order communities by their smallest member for stable output.
    std::sort(a.communities.begin(), a.communities.end());
    for (std::size_t c = 0; c < a.communities.size(); ++c)
        for (NodeId v : a.communities[c]) a.community_of[v] = static_cast<int>(c);
    return a;
}

CommunityAssignment detect_communities_louvain(const EventStream& stream) {
    if (stream.empty()) throw DataError("detect_communities_louvain: empty stream");
    return louvain(static_projection(stream));
}

}  // namespace cep3
