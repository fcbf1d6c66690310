#include "mvlv/reduce.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "mvlv/power_flow.hpp"

namespace mvlv {

namespace {

int thread_budget() {
    if (const char* env = std::getenv("MVLV_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 2;
}

}  // namespace

std::pair<NetworkModel, SpliceLog> splice(const NetworkModel& model) {
    SpliceLog log;
    log.nodes_before = model.node_count();

    // working copies of the line set, indexed by position; merged lines keep
    // the id of the first constituent, retired ones are tombstoned
    struct WLine {
        std::string id;
        int from, to;
        PhaseSet phases;
        Eigen::MatrixXcd z;
        double length_m;
        bool alive = true;
    };
    std::vector<WLine> wlines;
    wlines.reserve(model.lines().size());
    for (const auto& l : model.lines())
        wlines.push_back({l.id, l.from_bus, l.to_bus, l.phases, l.z_ohm, l.length_m, true});

    const size_t n_buses = model.buses().size();
    std::vector<std::vector<int>> incident(n_buses);  // bus -> wline indices
    for (size_t i = 0; i < wlines.size(); ++i) {
        incident[static_cast<size_t>(wlines[i].from)].push_back(static_cast<int>(i));
        incident[static_cast<size_t>(wlines[i].to)].push_back(static_cast<int>(i));
    }

    std::vector<char> blocked(n_buses, 0);  // loads, source, transformer terminals
    blocked[static_cast<size_t>(model.source_bus())] = 1;
    for (const auto& l : model.loads()) blocked[static_cast<size_t>(l.bus)] = 1;
    for (const auto& t : model.transformers()) {
        blocked[static_cast<size_t>(t.hv_bus)] = 1;
        blocked[static_cast<size_t>(t.lv_bus)] = 1;
    }

    std::vector<char> removed(n_buses, 0);
    auto live_lines = [&](int bus) {
        std::vector<int> out;
        for (int li : incident[static_cast<size_t>(bus)])
            if (wlines[static_cast<size_t>(li)].alive) out.push_back(li);
        return out;
    };

    std::vector<int> queue(n_buses);
    for (size_t i = 0; i < n_buses; ++i) queue[i] = static_cast<int>(i);
    std::vector<char> queued(n_buses, 1);

    while (!queue.empty()) {
        const int bus = queue.back();
        queue.pop_back();
        queued[static_cast<size_t>(bus)] = 0;
        if (blocked[static_cast<size_t>(bus)] || removed[static_cast<size_t>(bus)]) continue;

        const auto lines_here = live_lines(bus);
        if (lines_here.size() != 2) continue;
        WLine& a = wlines[static_cast<size_t>(lines_here[0])];
        WLine& b = wlines[static_cast<size_t>(lines_here[1])];
        if (a.phases != b.phases) continue;  // never merge across a phase reduction

        const int far_a = a.from == bus ? a.to : a.from;
        const int far_b = b.from == bus ? b.to : b.from;
        if (far_a == far_b) continue;  // would collapse a loop into a self-edge

        log.entries.push_back({model.bus(bus).id, a.id, b.id, a.id});
        a.from = far_a;
        a.to = far_b;
        a.z += b.z;
        a.length_m += b.length_m;
        b.alive = false;
        removed[static_cast<size_t>(bus)] = 1;
        incident[static_cast<size_t>(far_b)].push_back(lines_here[0]);

        for (int nb : {far_a, far_b}) {
            if (!queued[static_cast<size_t>(nb)]) {
                queued[static_cast<size_t>(nb)] = 1;
                queue.push_back(nb);
            }
        }
    }

    NetworkModelBuilder builder(model);
    builder.lines().clear();
    for (const WLine& w : wlines) {
        if (!w.alive) continue;
        builder.add_line({w.id, model.bus(w.from).id, model.bus(w.to).id, w.phases, w.z,
                          w.length_m});
    }
    NetworkModel out = builder.build();
    log.nodes_after = out.node_count();
    return {std::move(out), std::move(log)};
}

ReductionReport certify(const NetworkModel& original, const NetworkModel& spliced,
                        const DemandScenario& demand) {
    // the two models must serve the same customers
    std::map<std::string, const LoadPoint*> lo, ls;
    for (const auto& l : original.loads()) lo[l.id] = &l;
    for (const auto& l : spliced.loads()) ls[l.id] = &l;
    if (lo.size() != ls.size())
        throw InvalidInput("certify: load sets differ in size");
    for (const auto& [id, lp] : lo) {
        auto it = ls.find(id);
        if (it == ls.end()) throw InvalidInput("certify: load '" + id + "' missing from spliced model");
        if ((lp->phase.has_value() != it->second->phase.has_value()) ||
            (lp->phase && *lp->phase != *it->second->phase))
            throw InvalidInput("certify: load '" + id + "' changed phase connection");
    }

    SolveOptions opts;
    opts.tolerance = 1e-12;
    opts.max_iterations = 300;

    PowerFlowSolution sol_o, sol_s;
    if (thread_budget() >= 2) {
        auto fut = std::async(std::launch::async,
                              [&] { return solve(original, demand, opts); });
        sol_s = solve(spliced, demand, opts);
        sol_o = fut.get();
    } else {
        sol_o = solve(original, demand, opts);
        sol_s = solve(spliced, demand, opts);
    }

    // complex load-bus voltages in canonical order: loads sorted by id,
    // phases A<B<C within each load
    Eigen::Index count = 0;
    for (const auto& [id, lp] : lo) count += lp->phases().size();
    Eigen::VectorXcd vo(count), vs(count);
    Eigen::Index k = 0;
    for (const auto& [id, lp] : lo) {
        const LoadPoint* sp = ls.at(id);
        for (Phase p : lp->phases().list()) {
            vo[k] = sol_o.voltage(lp->bus, p);
            vs[k] = sol_s.voltage(sp->bus, p);
            ++k;
        }
    }

    ReductionReport r;
    const double denom_v = vo.norm();
    r.eps_v = denom_v > 0.0 ? (vo - vs).norm() / denom_v : 0.0;
    const double dloss = std::abs(sol_o.losses_kw - sol_s.losses_kw);
    r.eps_loss = dloss == 0.0 ? 0.0 : dloss / std::abs(sol_o.losses_kw);
    r.nodes_before = original.node_count();
    r.nodes_after = spliced.node_count();
    r.reduction_factor =
        r.nodes_after > 0 ? static_cast<double>(r.nodes_before) / r.nodes_after : 1.0;
    return r;
}

nlohmann::json to_json(const ReductionReport& report) {
    return nlohmann::json{{"nodes_before", report.nodes_before},
                          {"nodes_after", report.nodes_after},
                          {"eps_v", report.eps_v},
                          {"eps_loss", report.eps_loss},
                          {"reduction_factor", report.reduction_factor}};
}

}  // namespace mvlv
