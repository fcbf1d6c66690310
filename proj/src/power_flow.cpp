#include "mvlv/power_flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "mvlv/text_format.hpp"

namespace mvlv {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kPi = 3.141592653589793;

using SparseC = Eigen::SparseMatrix<Complex>;
using Triplet = Eigen::Triplet<Complex>;

double winding_volts(double kv_ll, WindingConnection conn) {
    return conn == WindingConnection::Delta ? kv_ll * 1000.0 : kv_ll * 1000.0 / kSqrt3;
}

/// One single-phase unit of a three-phase bank: an ideal n:1 ratio with the
/// series impedance referred to winding 2. Terminals are node ids, -1 = ground.
struct XfmrUnit {
    int t1a = -1, t1b = -1, t2a = -1, t2b = -1;
    Complex y11, y12, y22;  // reciprocal: y21 == y12
};

std::array<XfmrUnit, 3> transformer_units(const NodeIndex& idx, const TransformerBranch& t,
                                          double tap) {
    const double u1 = winding_volts(t.hv_kV, t.hv_conn);
    const double u2 = winding_volts(t.lv_kV, t.lv_conn);
    const double ratio = tap * u1 / u2;
    const double s_unit_va = t.rating_kVA * 1000.0 / 3.0;
    const Complex z2 = t.z_pu * (u2 * u2 / s_unit_va);
    const Complex y = 1.0 / z2;

    std::array<XfmrUnit, 3> units;
    for (int p = 0; p < 3; ++p) {
        const Phase ph = static_cast<Phase>(p);
        XfmrUnit& u = units[static_cast<size_t>(p)];
        if (t.hv_conn == WindingConnection::Delta) {
            u.t1a = idx.node(t.hv_bus, ph);
            u.t1b = idx.node(t.hv_bus, next_phase(ph));
        } else {
            u.t1a = idx.node(t.hv_bus, ph);
        }
        if (t.lv_conn == WindingConnection::Delta) {
            u.t2a = idx.node(t.lv_bus, ph);
            u.t2b = idx.node(t.lv_bus, next_phase(ph));
        } else {
            u.t2a = idx.node(t.lv_bus, ph);
        }
        u.y11 = y / (ratio * ratio);
        u.y12 = -y / ratio;
        u.y22 = y;
    }
    return units;
}

struct LoadInjection {
    int node;
    Complex s_va;
};

Complex load_power_va(const LoadSetting& s) {
    if (!(s.pf > 0.0 && s.pf <= 1.0))
        throw InvalidInput("demand scenario has power factor outside (0, 1]");
    const double p = s.kw * 1000.0;
    const double q = s.pf >= 1.0 ? 0.0 : p * std::tan(std::acos(s.pf));
    return {p, q};
}

struct SolveContext {
    NodeIndex idx;
    int n_nodes = 0;
    std::vector<int> unknown_of;  // node -> unknown index, -1 for slack
    std::vector<int> node_of_unknown;
    std::vector<int> slack_nodes;
    Eigen::VectorXcd v_slack;
    Eigen::VectorXd v_base;  // per node, line-to-neutral volts
    std::vector<LoadInjection> injections;
    std::vector<std::array<XfmrUnit, 3>> xfmr_units;  // parallel to model.transformers()
    std::vector<Eigen::MatrixXcd> line_y;             // parallel to model.lines()
};

SolveContext make_context(const NetworkModel& model, const DemandScenario& demand,
                          const std::vector<double>& taps) {
    if (!model.bases_assigned())
        throw InvalidInput("solve: voltage bases are not assigned (run assign_bases first)");

    SolveContext cx;
    cx.idx = NodeIndex(model);
    cx.n_nodes = cx.idx.count();
    cx.v_base.resize(cx.n_nodes);
    for (int n = 0; n < cx.n_nodes; ++n)
        cx.v_base[n] = model.bus(cx.idx.bus_of(n)).base_kV * 1000.0 / kSqrt3;

    cx.unknown_of.assign(static_cast<size_t>(cx.n_nodes), -1);
    const auto& src = model.source();
    for (Phase p : src.phases.list()) {
        const int n = cx.idx.node(model.source_bus(), p);
        if (n >= 0) cx.slack_nodes.push_back(n);
    }
    for (int n : cx.slack_nodes) cx.unknown_of[static_cast<size_t>(n)] = -2;  // mark slack
    for (int n = 0; n < cx.n_nodes; ++n) {
        if (cx.unknown_of[static_cast<size_t>(n)] == -1) {
            cx.unknown_of[static_cast<size_t>(n)] = static_cast<int>(cx.node_of_unknown.size());
            cx.node_of_unknown.push_back(n);
        }
    }
    for (int n : cx.slack_nodes) cx.unknown_of[static_cast<size_t>(n)] = -1;

    cx.v_slack.resize(static_cast<Eigen::Index>(cx.slack_nodes.size()));
    for (size_t k = 0; k < cx.slack_nodes.size(); ++k) {
        const int n = cx.slack_nodes[k];
        const double ang_deg = src.angle_deg - 120.0 * static_cast<int>(cx.idx.phase_of(n));
        const double ang = ang_deg * kPi / 180.0;
        cx.v_slack[static_cast<Eigen::Index>(k)] =
            src.pu * cx.v_base[n] * Complex(std::cos(ang), std::sin(ang));
    }

    for (const auto& load : model.loads()) {
        const LoadSetting setting = demand.get(load.id);
        if (setting.kw == 0.0) continue;
        if (load.bus == model.source_bus())
            throw InvalidInput("load '" + load.id +
                               "' draws power directly on the slack bus; unsupported");
        const Complex s = load_power_va(setting);
        if (load.phase) {
            cx.injections.push_back({cx.idx.node(load.bus, *load.phase), s});
        } else {
            for (Phase p : {Phase::A, Phase::B, Phase::C})
                cx.injections.push_back({cx.idx.node(load.bus, p), s / 3.0});
        }
    }

    cx.line_y.reserve(model.lines().size());
    for (const auto& l : model.lines()) cx.line_y.push_back(l.z_ohm.inverse());
    cx.xfmr_units.reserve(model.transformers().size());
    for (size_t i = 0; i < model.transformers().size(); ++i)
        cx.xfmr_units.push_back(transformer_units(cx.idx, model.transformers()[i], taps[i]));
    return cx;
}

/// Assemble Y into the unknown/slack partition and factorize once.
struct FactorizedSystem {
    SparseC y_uu, y_us;
    Eigen::SparseLU<SparseC> lu;
    Eigen::VectorXcd rhs_const;  // -Y_us * V_slack

    FactorizedSystem(const NetworkModel& model, const SolveContext& cx) {
        const int nu = static_cast<int>(cx.node_of_unknown.size());
        const int ns = static_cast<int>(cx.slack_nodes.size());
        std::vector<int> slack_pos(static_cast<size_t>(cx.n_nodes), -1);
        for (size_t k = 0; k < cx.slack_nodes.size(); ++k)
            slack_pos[static_cast<size_t>(cx.slack_nodes[k])] = static_cast<int>(k);

        std::vector<Triplet> tuu, tus;
        auto add = [&](int i, int j, Complex y) {
            if (i < 0 || j < 0) return;  // ground terminal
            const int ui = cx.unknown_of[static_cast<size_t>(i)];
            if (ui < 0) return;  // slack row not solved
            const int uj = cx.unknown_of[static_cast<size_t>(j)];
            if (uj >= 0) tuu.emplace_back(ui, uj, y);
            else tus.emplace_back(ui, slack_pos[static_cast<size_t>(j)], y);
        };

        for (size_t li = 0; li < model.lines().size(); ++li) {
            const auto& l = model.lines()[li];
            const auto ph = l.phases.list();
            const int n = static_cast<int>(ph.size());
            const Eigen::MatrixXcd& y = cx.line_y[li];
            for (int i = 0; i < n; ++i) {
                const int fi = cx.idx.node(l.from_bus, ph[static_cast<size_t>(i)]);
                const int ti = cx.idx.node(l.to_bus, ph[static_cast<size_t>(i)]);
                for (int j = 0; j < n; ++j) {
                    const int fj = cx.idx.node(l.from_bus, ph[static_cast<size_t>(j)]);
                    const int tj = cx.idx.node(l.to_bus, ph[static_cast<size_t>(j)]);
                    add(fi, fj, y(i, j));
                    add(ti, tj, y(i, j));
                    add(fi, tj, -y(i, j));
                    add(ti, fj, -y(i, j));
                }
            }
        }
        for (const auto& units : cx.xfmr_units) {
            for (const XfmrUnit& u : units) {
                auto port = [&](int pa, int qa, int pb, int qb, Complex y) {
                    add(pa, pb, y);
                    add(pa, qb, -y);
                    add(qa, pb, -y);
                    add(qa, qb, y);
                };
                port(u.t1a, u.t1b, u.t1a, u.t1b, u.y11);
                port(u.t1a, u.t1b, u.t2a, u.t2b, u.y12);
                port(u.t2a, u.t2b, u.t1a, u.t1b, u.y12);
                port(u.t2a, u.t2b, u.t2a, u.t2b, u.y22);
            }
        }

        y_uu.resize(nu, nu);
        y_uu.setFromTriplets(tuu.begin(), tuu.end());
        y_us.resize(nu, ns);
        y_us.setFromTriplets(tus.begin(), tus.end());

        lu.compute(y_uu);
        if (lu.info() != Eigen::Success)
            throw SingularSystem(
                "nodal admittance matrix is singular (a section has no voltage reference)");
        rhs_const = -(y_us * cx.v_slack);
    }
};

Eigen::VectorXcd nominal_profile(const NetworkModel& model, const SolveContext& cx) {
    Eigen::VectorXcd v(cx.n_nodes);
    const auto& src = model.source();
    for (int n = 0; n < cx.n_nodes; ++n) {
        const double ang_deg = src.angle_deg - 120.0 * static_cast<int>(cx.idx.phase_of(n));
        const double ang = ang_deg * kPi / 180.0;
        v[n] = src.pu * cx.v_base[n] * Complex(std::cos(ang), std::sin(ang));
    }
    return v;
}

PowerFlowSolution solve_fixed_taps(const NetworkModel& model, const DemandScenario& demand,
                                   const SolveOptions& opts, const std::vector<double>& taps) {
    const SolveContext cx = make_context(model, demand, taps);
    const FactorizedSystem sys(model, cx);
    const int nu = static_cast<int>(cx.node_of_unknown.size());

    Eigen::VectorXcd v_u(nu);
    if (opts.flat_start) {
        const Eigen::VectorXcd nominal = nominal_profile(model, cx);
        for (int u = 0; u < nu; ++u) v_u[u] = nominal[cx.node_of_unknown[static_cast<size_t>(u)]];
    } else {
        v_u = sys.lu.solve(sys.rhs_const);
    }

    Eigen::VectorXcd rhs(nu);
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    while (iterations < opts.max_iterations) {
        ++iterations;
        rhs = sys.rhs_const;
        for (const LoadInjection& inj : cx.injections) {
            const int u = cx.unknown_of[static_cast<size_t>(inj.node)];
            if (u < 0) continue;  // load on the slack bus: supplied directly
            rhs[u] -= std::conj(inj.s_va / v_u[u]);
        }
        const Eigen::VectorXcd v_next = sys.lu.solve(rhs);
        residual = 0.0;
        for (int u = 0; u < nu; ++u) {
            const double d = std::abs(v_next[u] - v_u[u]) /
                             cx.v_base[cx.node_of_unknown[static_cast<size_t>(u)]];
            residual = std::max(residual, d);
        }
        v_u = v_next;
        if (residual <= opts.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NonConvergence(iterations, residual);

    PowerFlowSolution sol;
    sol.index = cx.idx;
    sol.iterations = iterations;
    sol.converged = true;
    sol.residual_pu = residual;

    sol.volts.resize(cx.n_nodes);
    for (int u = 0; u < nu; ++u) sol.volts[cx.node_of_unknown[static_cast<size_t>(u)]] = v_u[u];
    for (size_t k = 0; k < cx.slack_nodes.size(); ++k)
        sol.volts[cx.slack_nodes[k]] = cx.v_slack[static_cast<Eigen::Index>(k)];
    sol.v_pu.resize(cx.n_nodes);
    for (int n = 0; n < cx.n_nodes; ++n) sol.v_pu[n] = std::abs(sol.volts[n]) / cx.v_base[n];

    // branch flows, losses, substation power
    const int slack_bus = model.source_bus();
    Complex loss_va = 0.0;
    Complex substation_va = 0.0;
    auto account = [&](int node, Complex i_into) {
        if (node < 0) return;
        const Complex s = sol.volts[node] * std::conj(i_into);
        loss_va += s;
        if (cx.idx.bus_of(node) == slack_bus) substation_va += s;
    };

    for (size_t li = 0; li < model.lines().size(); ++li) {
        const auto& l = model.lines()[li];
        const auto ph = l.phases.list();
        const int n = static_cast<int>(ph.size());
        Eigen::VectorXcd dv(n);
        for (int i = 0; i < n; ++i)
            dv[i] = sol.volts[cx.idx.node(l.from_bus, ph[static_cast<size_t>(i)])] -
                    sol.volts[cx.idx.node(l.to_bus, ph[static_cast<size_t>(i)])];
        BranchFlow flow;
        flow.phases = l.phases;
        flow.from_amps = cx.line_y[li] * dv;
        flow.to_amps = -flow.from_amps;
        for (int i = 0; i < n; ++i) {
            account(cx.idx.node(l.from_bus, ph[static_cast<size_t>(i)]), flow.from_amps[i]);
            account(cx.idx.node(l.to_bus, ph[static_cast<size_t>(i)]), flow.to_amps[i]);
        }
        sol.flows.emplace(l.id, std::move(flow));
    }

    for (size_t ti = 0; ti < model.transformers().size(); ++ti) {
        const auto& t = model.transformers()[ti];
        BranchFlow flow;
        flow.phases = PhaseSet::all3();
        flow.from_amps = Eigen::VectorXcd::Zero(3);
        flow.to_amps = Eigen::VectorXcd::Zero(3);
        auto v_at = [&](int node) { return node < 0 ? Complex(0, 0) : sol.volts[node]; };
        for (const XfmrUnit& u : cx.xfmr_units[ti]) {
            const Complex vw1 = v_at(u.t1a) - v_at(u.t1b);
            const Complex vw2 = v_at(u.t2a) - v_at(u.t2b);
            const Complex iw1 = u.y11 * vw1 + u.y12 * vw2;
            const Complex iw2 = u.y12 * vw1 + u.y22 * vw2;
            account(u.t1a, iw1);
            account(u.t1b, -iw1);
            account(u.t2a, iw2);
            account(u.t2b, -iw2);
            auto phase_slot = [&](int node, Complex amps, bool hv) {
                if (node < 0) return;
                const int p = static_cast<int>(cx.idx.phase_of(node));
                if (hv) flow.from_amps[p] += amps;
                else flow.to_amps[p] += amps;
            };
            phase_slot(u.t1a, iw1, true);
            phase_slot(u.t1b, -iw1, true);
            phase_slot(u.t2a, iw2, false);
            phase_slot(u.t2b, -iw2, false);
        }
        sol.flows.emplace(t.id, std::move(flow));
    }

    sol.branch_loss_va = loss_va;
    sol.losses_kw = loss_va.real() / 1000.0;
    sol.substation_va = substation_va;

    for (size_t ti = 0; ti < model.transformers().size(); ++ti)
        if (model.transformers()[ti].regulated)
            sol.final_taps[model.transformers()[ti].id] = taps[ti];
    return sol;
}

std::vector<double> model_taps(const NetworkModel& model) {
    std::vector<double> taps;
    taps.reserve(model.transformers().size());
    for (const auto& t : model.transformers()) taps.push_back(t.tap);
    return taps;
}

double regulated_voltage_pu(const PowerFlowSolution& sol, const NetworkModel& model,
                            const TransformerBranch& t) {
    const std::string& target = t.reg_bus.empty() ? model.bus(t.lv_bus).id : t.reg_bus;
    const int bidx = model.bus_index(target);
    const auto phases = model.bus(bidx).phases.list();
    double sum = 0.0;
    for (Phase p : phases) sum += sol.voltage_pu(bidx, p);
    return sum / static_cast<double>(phases.size());
}

}  // namespace

NodeIndex::NodeIndex(const NetworkModel& m) {
    offsets_.resize(m.buses().size());
    masks_.reserve(m.buses().size());
    int n = 0;
    for (size_t b = 0; b < m.buses().size(); ++b) {
        offsets_[b] = n;
        masks_.push_back(m.buses()[b].phases);
        for (Phase p : m.buses()[b].phases.list()) {
            node_bus_.push_back(static_cast<int>(b));
            node_phase_.push_back(p);
            ++n;
        }
    }
    count_ = n;
}

PowerFlowSolution solve(const NetworkModel& model, const DemandScenario& demand,
                        const SolveOptions& opts) {
    return solve_fixed_taps(model, demand, opts, model_taps(model));
}

PowerFlowSolution solve_with_controls(const NetworkModel& model, const DemandScenario& demand,
                                      const SolveOptions& opts) {
    std::vector<double> taps = model_taps(model);
    std::vector<int> offsets(taps.size(), 0);  // steps moved, for cycle detection
    std::set<std::vector<int>> visited;
    visited.insert(offsets);
    std::set<size_t> saturated;

    PowerFlowSolution sol = solve_fixed_taps(model, demand, opts, taps);
    int control_iterations = 0;

    while (true) {
        // regulated transformers out of band, still movable
        int worst = -1;
        double worst_dev = 0.0;
        bool any_violation = false;
        for (size_t ti = 0; ti < model.transformers().size(); ++ti) {
            const auto& t = model.transformers()[ti];
            if (!t.regulated) continue;
            const double dev = regulated_voltage_pu(sol, model, t) - t.reg_setpoint_pu;
            if (std::abs(dev) <= t.reg_band_pu) continue;
            any_violation = true;
            if (saturated.count(ti)) continue;
            if (worst < 0 || std::abs(dev) > std::abs(worst_dev) ||
                (std::abs(dev) == std::abs(worst_dev) &&
                 t.id < model.transformers()[static_cast<size_t>(worst)].id)) {
                worst = static_cast<int>(ti);
                worst_dev = dev;
            }
        }
        if (worst < 0) break;  // in band everywhere, or every violator saturated

        const auto& t = model.transformers()[static_cast<size_t>(worst)];
        const double step = t.tap_step_size();
        // voltage above band: raise the HV tap to pull the regulated side down
        const int dir = worst_dev > 0.0 ? +1 : -1;
        const double proposal = taps[static_cast<size_t>(worst)] + dir * step;
        if (proposal < t.tap_min - 1e-12 || proposal > t.tap_max + 1e-12) {
            saturated.insert(static_cast<size_t>(worst));
            continue;  // no re-solve needed; pick the next worst
        }
        if (++control_iterations > opts.max_control_iterations)
            throw NonConvergence(opts.max_control_iterations, std::abs(worst_dev));
        taps[static_cast<size_t>(worst)] = proposal;
        offsets[static_cast<size_t>(worst)] += dir;
        if (!visited.insert(offsets).second)
            throw ControlOscillation("tap control revisited tap state on transformer '" + t.id +
                                     "'");
        sol = solve_fixed_taps(model, demand, opts, taps);
    }

    sol.control_iterations = control_iterations;
    for (size_t ti = 0; ti < model.transformers().size(); ++ti) {
        const auto& t = model.transformers()[ti];
        if (!t.regulated) continue;
        const double dev = regulated_voltage_pu(sol, model, t) - t.reg_setpoint_pu;
        if (std::abs(dev) > t.reg_band_pu) {
            sol.band_unmet = true;
            sol.band_unmet_transformers.push_back(t.id);
        }
    }
    return sol;
}

double losses(const PowerFlowSolution& solution) { return solution.losses_kw; }

Complex substation_power(const PowerFlowSolution& solution) {
    return solution.substation_va / 1e6;
}

double sequence_unbalance(const PowerFlowSolution& solution, const std::string& branch_id) {
    auto it = solution.flows.find(branch_id);
    if (it == solution.flows.end())
        throw InvalidInput("sequence_unbalance: unknown branch '" + branch_id + "'");
    const BranchFlow& flow = it->second;
    if (flow.phases != PhaseSet::all3())
        throw InvalidInput("sequence_unbalance: branch '" + branch_id + "' is not three-phase");
    const Complex a = std::polar(1.0, 2.0 * kPi / 3.0);
    const Complex ia = flow.from_amps[0], ib = flow.from_amps[1], ic = flow.from_amps[2];
    const Complex i0 = (ia + ib + ic) / 3.0;
    const Complex i1 = (ia + a * ib + a * a * ic) / 3.0;
    if (std::abs(i1) < 1e-30)
        throw InvalidInput("sequence_unbalance: zero positive-sequence current at branch '" +
                           branch_id + "'");
    return std::abs(i0) / std::abs(i1);
}

std::string voltage_csv(const PowerFlowSolution& solution, const NetworkModel& model) {
    std::vector<int> order(model.buses().size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return model.bus(a).id < model.bus(b).id;
    });
    std::string out = csv_row({"bus_id", "phase", "v_pu", "v_volts_mag", "v_deg", "zone",
                               "lv_circuit_id", "mv_feeder_id"});
    for (int b : order) {
        const Bus& bus = model.bus(b);
        for (Phase p : bus.phases.list()) {
            const Complex v = solution.voltage(b, p);
            out += csv_row({bus.id, std::string(1, phase_letter(p)),
                            fmt12(solution.voltage_pu(b, p)), fmt12(std::abs(v)),
                            fmt12(std::arg(v) * 180.0 / kPi), zone_name(bus.zone),
                            bus.lv_circuit_id, bus.mv_feeder_id});
        }
    }
    return out;
}

}  // namespace mvlv
