#include "mvlv/network_model.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>

namespace mvlv {

namespace {

void check_impedance_matrix(const std::string& line_id, const Eigen::MatrixXcd& z, int n_phases) {
    if (z.rows() != n_phases || z.cols() != n_phases)
        throw InvalidInput("line '" + line_id + "': impedance matrix is " +
                           std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                           " but the line has " + std::to_string(n_phases) + " phase(s)");
    const double scale = std::max(z.cwiseAbs().maxCoeff(), 1e-30);
    if (!z.isApprox(z.transpose(), 1e-9))
        throw InvalidInput("line '" + line_id + "': impedance matrix is not symmetric");
    for (int i = 0; i < n_phases; ++i) {
        if (z(i, i).real() <= 0.0)
            throw InvalidInput("line '" + line_id + "': non-positive series resistance on diagonal");
    }
    (void)scale;
}

}  // namespace

NetworkModelBuilder::NetworkModelBuilder(const NetworkModel& m) {
    name_ = m.name();
    base_frequency_ = m.base_frequency();
    source_ = m.source();
    bases_assigned_ = m.bases_assigned();
    for (const auto& b : m.buses()) bus_meta_[b.id] = b;
    for (const auto& l : m.lines()) {
        lines_.push_back({l.id, m.bus(l.from_bus).id, m.bus(l.to_bus).id, l.phases, l.z_ohm,
                          l.length_m});
    }
    for (const auto& t : m.transformers()) {
        Transformer bt;
        bt.id = t.id;
        bt.hv = m.bus(t.hv_bus).id;
        bt.lv = m.bus(t.lv_bus).id;
        bt.hv_conn = t.hv_conn;
        bt.lv_conn = t.lv_conn;
        bt.hv_kV = t.hv_kV;
        bt.lv_kV = t.lv_kV;
        bt.rating_kVA = t.rating_kVA;
        bt.z_pu = t.z_pu;
        bt.tap = t.tap;
        bt.tap_min = t.tap_min;
        bt.tap_max = t.tap_max;
        bt.tap_steps = t.tap_steps;
        bt.regulated = t.regulated;
        bt.reg_bus = t.reg_bus;
        bt.reg_setpoint_pu = t.reg_setpoint_pu;
        bt.reg_band_pu = t.reg_band_pu;
        transformers_.push_back(std::move(bt));
    }
    for (const auto& l : m.loads()) {
        loads_.push_back({l.id, m.bus(l.bus).id, l.phase, l.kw, l.pf});
    }
}

NetworkModel NetworkModelBuilder::build() const {
    NetworkModel m;
    m.name_ = name_.empty() ? "circuit" : name_;
    m.base_frequency_ = base_frequency_;
    m.source_ = source_;
    m.bases_assigned_ = bases_assigned_;

    if (source_.bus.empty())
        throw TopologyError("model has no source; exactly one circuit/source declaration is required");

    auto intern_bus = [&m](const std::string& id) -> int {
        auto it = m.bus_index_.find(id);
        if (it != m.bus_index_.end()) return it->second;
        int idx = static_cast<int>(m.buses_.size());
        Bus b;
        b.id = id;
        m.buses_.push_back(std::move(b));
        m.bus_index_.emplace(id, idx);
        return idx;
    };

    m.source_bus_ = intern_bus(source_.bus);
    m.buses_[static_cast<size_t>(m.source_bus_)].phases =
        m.buses_[static_cast<size_t>(m.source_bus_)].phases.united(source_.phases);

    std::unordered_set<std::string> line_ids, xfmr_ids, load_ids;

    for (const auto& l : lines_) {
        if (!line_ids.insert(l.id).second)
            throw InvalidInput("duplicate line id '" + l.id + "'");
        if (l.phases.empty()) throw InvalidInput("line '" + l.id + "' has no phases");
        if (l.from == l.to)
            throw TopologyError("line '" + l.id + "' connects bus '" + l.from + "' to itself");
        check_impedance_matrix(l.id, l.z_ohm, l.phases.size());
        LineBranch lb;
        lb.id = l.id;
        lb.from_bus = intern_bus(l.from);
        lb.to_bus = intern_bus(l.to);
        lb.phases = l.phases;
        lb.z_ohm = l.z_ohm;
        lb.length_m = l.length_m;
        m.buses_[static_cast<size_t>(lb.from_bus)].phases =
            m.buses_[static_cast<size_t>(lb.from_bus)].phases.united(l.phases);
        m.buses_[static_cast<size_t>(lb.to_bus)].phases =
            m.buses_[static_cast<size_t>(lb.to_bus)].phases.united(l.phases);
        m.lines_.push_back(std::move(lb));
    }

    for (const auto& t : transformers_) {
        if (!xfmr_ids.insert(t.id).second)
            throw InvalidInput("duplicate transformer id '" + t.id + "'");
        if (t.hv == t.lv)
            throw TopologyError("transformer '" + t.id + "' connects bus '" + t.hv + "' to itself");
        if (t.rating_kVA <= 0.0)
            throw InvalidInput("transformer '" + t.id + "': rating must be positive");
        if (t.hv_kV <= 0.0 || t.lv_kV <= 0.0)
            throw InvalidInput("transformer '" + t.id + "': winding kV must be positive");
        const double zmag = std::abs(t.z_pu);
        if (!(zmag > 0.0 && zmag < 0.5))
            throw InvalidInput("transformer '" + t.id + "': |z_pu| must lie in (0, 0.5)");
        if (!(t.tap_min < t.tap_max) || t.tap_steps < 1)
            throw InvalidInput("transformer '" + t.id + "': bad tap limits");
        if (t.tap < t.tap_min - 1e-12 || t.tap > t.tap_max + 1e-12)
            throw InvalidInput("transformer '" + t.id + "': tap outside its limits");
        TransformerBranch tb;
        tb.id = t.id;
        tb.hv_bus = intern_bus(t.hv);
        tb.lv_bus = intern_bus(t.lv);
        tb.hv_conn = t.hv_conn;
        tb.lv_conn = t.lv_conn;
        tb.hv_kV = t.hv_kV;
        tb.lv_kV = t.lv_kV;
        tb.rating_kVA = t.rating_kVA;
        tb.z_pu = t.z_pu;
        tb.tap = t.tap;
        tb.tap_min = t.tap_min;
        tb.tap_max = t.tap_max;
        tb.tap_steps = t.tap_steps;
        tb.regulated = t.regulated;
        tb.reg_bus = t.reg_bus;
        tb.reg_setpoint_pu = t.reg_setpoint_pu;
        tb.reg_band_pu = t.reg_band_pu;
        // both terminals of a three-phase bank carry all phases
        m.buses_[static_cast<size_t>(tb.hv_bus)].phases = PhaseSet::all3();
        m.buses_[static_cast<size_t>(tb.lv_bus)].phases =
            m.buses_[static_cast<size_t>(tb.lv_bus)].phases.united(PhaseSet::all3());
        m.transformers_.push_back(std::move(tb));
    }

    for (const auto& l : loads_) {
        if (!load_ids.insert(l.id).second)
            throw InvalidInput("duplicate load id '" + l.id + "'");
        if (l.kw < 0.0) throw InvalidInput("load '" + l.id + "': kW must be >= 0 at definition");
        if (!(l.pf > 0.0 && l.pf <= 1.0))
            throw InvalidInput("load '" + l.id + "': power factor must lie in (0, 1]");
        int bidx = m.bus_index(l.bus);
        if (bidx < 0)
            throw LinkError("load '" + l.id + "' references bus '" + l.bus +
                            "' which no branch or source touches");
        LoadPoint lp;
        lp.id = l.id;
        lp.bus = bidx;
        lp.phase = l.phase;
        lp.kw = l.kw;
        lp.pf = l.pf;
        if (!lp.phases().is_subset_of(m.buses_[static_cast<size_t>(bidx)].phases))
            throw LinkError("load '" + l.id + "' needs phase(s) " + lp.phases().to_string() +
                            " at bus '" + l.bus + "' which only carries " +
                            m.buses_[static_cast<size_t>(bidx)].phases.to_string());
        m.loads_.push_back(std::move(lp));
    }

    if (m.transformers_.empty() && m.lines_.empty() && m.buses_.size() > 1)
        throw TopologyError("model has buses but no branches");

    // regulated-bus references
    for (auto& t : m.transformers_) {
        if (t.regulated && !t.reg_bus.empty() && m.bus_index(t.reg_bus) < 0)
            throw LinkError("transformer '" + t.id + "' regulates unknown bus '" + t.reg_bus + "'");
    }

    // apply carried bus metadata
    for (auto& b : m.buses_) {
        auto it = bus_meta_.find(b.id);
        if (it != bus_meta_.end()) {
            b.base_kV = it->second.base_kV;
            b.zone = it->second.zone;
            b.lv_circuit_id = it->second.lv_circuit_id;
            b.mv_feeder_id = it->second.mv_feeder_id;
        }
    }

    // connectivity from the source over the branch graph
    std::vector<char> seen(m.buses_.size(), 0);
    std::vector<std::vector<int>> adj(m.buses_.size());
    for (const auto& l : m.lines_) {
        adj[static_cast<size_t>(l.from_bus)].push_back(l.to_bus);
        adj[static_cast<size_t>(l.to_bus)].push_back(l.from_bus);
    }
    for (const auto& t : m.transformers_) {
        adj[static_cast<size_t>(t.hv_bus)].push_back(t.lv_bus);
        adj[static_cast<size_t>(t.lv_bus)].push_back(t.hv_bus);
    }
    std::queue<int> q;
    q.push(m.source_bus_);
    seen[static_cast<size_t>(m.source_bus_)] = 1;
    int reached = 0;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        ++reached;
        for (int v : adj[static_cast<size_t>(u)]) {
            if (!seen[static_cast<size_t>(v)]) {
                seen[static_cast<size_t>(v)] = 1;
                q.push(v);
            }
        }
    }
    if (reached != static_cast<int>(m.buses_.size())) {
        for (size_t i = 0; i < m.buses_.size(); ++i) {
            if (!seen[i])
                throw TopologyError("bus '" + m.buses_[i].id +
                                    "' is not connected to the source bus '" + source_.bus + "'");
        }
    }

    for (const auto& b : m.buses_) {
        if (b.phases.empty())
            throw InvalidInput("bus '" + b.id + "' ends up with no phases");
    }

    return m;
}

}  // namespace mvlv
