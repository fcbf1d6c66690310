#include "mvlv/topology.hpp"

#include <cmath>
#include <queue>

#include <nlohmann/json.hpp>

namespace mvlv {

namespace {

struct Edge {
    int peer;
    bool is_transformer;
    int branch_idx;
};

std::vector<std::vector<Edge>> adjacency(const NetworkModel& m) {
    std::vector<std::vector<Edge>> adj(m.buses().size());
    for (size_t i = 0; i < m.lines().size(); ++i) {
        const auto& l = m.lines()[i];
        adj[static_cast<size_t>(l.from_bus)].push_back({l.to_bus, false, static_cast<int>(i)});
        adj[static_cast<size_t>(l.to_bus)].push_back({l.from_bus, false, static_cast<int>(i)});
    }
    for (size_t i = 0; i < m.transformers().size(); ++i) {
        const auto& t = m.transformers()[i];
        adj[static_cast<size_t>(t.hv_bus)].push_back({t.lv_bus, true, static_cast<int>(i)});
        adj[static_cast<size_t>(t.lv_bus)].push_back({t.hv_bus, true, static_cast<int>(i)});
    }
    return adj;
}

}  // namespace

NetworkModel assign_bases(const NetworkModel& model, double source_kV) {
    const double src_kV = source_kV > 0.0 ? source_kV : model.source().base_kV;
    if (src_kV <= 0.0)
        throw InvalidInput("assign_bases: no source kV available (neither argument nor model)");

    const auto adj = adjacency(model);
    const size_t n = model.buses().size();
    std::vector<double> base(n, 0.0);
    std::vector<std::string> feeder(n), circuit(n);

    const int src = model.source_bus();
    base[static_cast<size_t>(src)] = src_kV;
    if (src_kV < 1.0) circuit[static_cast<size_t>(src)] = model.name();

    std::queue<int> q;
    q.push(src);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const Edge& e : adj[static_cast<size_t>(u)]) {
            double b = base[static_cast<size_t>(u)];
            std::string circ = circuit[static_cast<size_t>(u)];
            if (e.is_transformer) {
                const auto& t = model.transformers()[static_cast<size_t>(e.branch_idx)];
                const bool downhill = (e.peer == t.lv_bus);
                b *= downhill ? (t.lv_kV / t.hv_kV) : (t.hv_kV / t.lv_kV);
                circ = t.id;
            }
            if (base[static_cast<size_t>(e.peer)] == 0.0) {
                base[static_cast<size_t>(e.peer)] = b;
                feeder[static_cast<size_t>(e.peer)] =
                    (u == src) ? model.bus(e.peer).id : feeder[static_cast<size_t>(u)];
                circuit[static_cast<size_t>(e.peer)] = circ;
                q.push(e.peer);
            }
        }
    }

    // consistency over every branch, so loops with mismatched ratios are caught
    for (const auto& l : model.lines()) {
        const double bf = base[static_cast<size_t>(l.from_bus)];
        const double bt = base[static_cast<size_t>(l.to_bus)];
        if (std::abs(bf - bt) > 1e-6 * std::max(bf, bt))
            throw TopologyError("base conflict across line '" + l.id + "': " +
                                std::to_string(bf) + " kV vs " + std::to_string(bt) + " kV");
    }
    for (const auto& t : model.transformers()) {
        const double bh = base[static_cast<size_t>(t.hv_bus)];
        const double bl = base[static_cast<size_t>(t.lv_bus)];
        const double expect = bh * t.lv_kV / t.hv_kV;
        if (std::abs(bl - expect) > 1e-6 * std::max(bl, expect))
            throw TopologyError("base conflict across transformer '" + t.id +
                                "': two paths imply different bases at bus '" +
                                model.bus(t.lv_bus).id + "'");
    }

    NetworkModelBuilder builder(model);
    for (size_t i = 0; i < n; ++i) {
        Bus& meta = builder.bus_meta()[model.buses()[i].id];
        meta.base_kV = base[i];
        meta.zone = base[i] >= 1.0 ? Zone::MV : Zone::LV;
        meta.mv_feeder_id = feeder[i];
        meta.lv_circuit_id = meta.zone == Zone::LV ? circuit[i] : std::string{};
    }
    builder.mark_bases_assigned();
    return builder.build();
}

TopologyReport topology_report(const NetworkModel& model) {
    TopologyReport r;
    r.node_count = model.node_count();

    const auto adj = adjacency(model);
    const size_t n = model.buses().size();

    for (size_t i = 0; i < n; ++i)
        r.degree_histogram[static_cast<int>(adj[i].size())] += 1;

    std::vector<char> seen(n, 0);
    for (size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        int count = 0;
        std::queue<size_t> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            size_t u = q.front();
            q.pop();
            ++count;
            for (const Edge& e : adj[u]) {
                if (!seen[static_cast<size_t>(e.peer)]) {
                    seen[static_cast<size_t>(e.peer)] = 1;
                    q.push(static_cast<size_t>(e.peer));
                }
            }
        }
        r.islands.push_back({count, model.buses()[s].id});
    }

    r.is_radial = r.islands.size() == 1 &&
                  model.branch_count() == static_cast<int>(n) - 1;
    return r;
}

nlohmann::json to_json(const TopologyReport& report) {
    nlohmann::json islands = nlohmann::json::array();
    for (const auto& i : report.islands)
        islands.push_back({{"bus_count", i.bus_count}, {"seed_bus", i.seed_bus}});
    nlohmann::json degrees = nlohmann::json::object();
    for (const auto& [deg, cnt] : report.degree_histogram)
        degrees[std::to_string(deg)] = cnt;
    return nlohmann::json{{"is_radial", report.is_radial},
                          {"islands", islands},
                          {"node_count", report.node_count},
                          {"degree_histogram", degrees}};
}

}  // namespace mvlv
