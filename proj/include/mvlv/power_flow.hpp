#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlv/demand.hpp"
#include "mvlv/network_model.hpp"

namespace mvlv {

struct SolveOptions {
    double tolerance = 1e-8;          ///< max per-node voltage change, pu
    int max_iterations = 100;
    int max_control_iterations = 30;  ///< outer tap-stepping iterations
    /// true: start from the nominal positive-sequence profile;
    /// false (default): start from the no-load network solution (one extra
    /// triangular solve, robust across transformer phase shifts).
    bool flat_start = false;
    double system_base_MVA = 1.0;  ///< base for power-balance style pu checks
};

/// Dense map bus-phase -> solver node. Node order: buses in model order,
/// phases A<B<C within a bus. Neutrals are implicitly grounded and carry
/// no node.
class NodeIndex {
public:
    NodeIndex() = default;
    explicit NodeIndex(const NetworkModel& m);

    int node(int bus, Phase p) const {
        const int k = masks_[static_cast<size_t>(bus)].index_of(p);
        return k < 0 ? -1 : offsets_[static_cast<size_t>(bus)] + k;
    }
    int count() const { return count_; }
    int bus_of(int node) const { return node_bus_[static_cast<size_t>(node)]; }
    Phase phase_of(int node) const { return node_phase_[static_cast<size_t>(node)]; }

private:
    std::vector<int> offsets_;
    std::vector<PhaseSet> masks_;
    std::vector<int> node_bus_;
    std::vector<Phase> node_phase_;
    int count_ = 0;
};

/// Currents flowing into a branch at each terminal, one entry per phase of
/// the branch (A<B<C order). For transformers the terminals are HV/LV.
struct BranchFlow {
    PhaseSet phases;
    Eigen::VectorXcd from_amps;
    Eigen::VectorXcd to_amps;
};

struct PowerFlowSolution {
    NodeIndex index;
    Eigen::VectorXcd volts;  ///< per node, complex
    Eigen::VectorXd v_pu;    ///< per node, |V| / (base_kV * 1000 / sqrt(3))
    std::map<std::string, BranchFlow> flows;

    Complex substation_va;    ///< complex power leaving the slack bus, VA
    Complex branch_loss_va;   ///< sum over branches of absorbed complex power
    double losses_kw = 0.0;   ///< real part of branch_loss_va, kW

    std::map<std::string, double> final_taps;  ///< regulated transformers only
    int iterations = 0;
    int control_iterations = 0;
    bool converged = false;
    double residual_pu = 0.0;
    bool band_unmet = false;  ///< some regulated bus saturated outside its band
    std::vector<std::string> band_unmet_transformers;

    double voltage_pu(int bus, Phase p) const { return v_pu[index.node(bus, p)]; }
    Complex voltage(int bus, Phase p) const { return volts[index.node(bus, p)]; }
};

/// Fixed-point current-injection solution of the full complex nodal
/// equations: the constant admittance matrix is factorized once and load
/// current injections are iterated until the largest per-node voltage change
/// drops below tolerance. Loads not covered by `demand` draw zero power.
PowerFlowSolution solve(const NetworkModel& model, const DemandScenario& demand,
                        const SolveOptions& opts = {});

/// Outer tap-control loop around solve(): one discrete tap step per outer
/// iteration on the regulated transformer furthest out of band (id
/// tie-break), until every regulated bus is in band or its tap saturates
/// (flagged band_unmet). A revisited tap state raises ControlOscillation.
PowerFlowSolution solve_with_controls(const NetworkModel& model, const DemandScenario& demand,
                                      const SolveOptions& opts = {});

/// Total series losses of the converged solution, kW.
double losses(const PowerFlowSolution& solution);

/// Complex power leaving the slack bus, MVA.
Complex substation_power(const PowerFlowSolution& solution);

/// |I0| / |I1| from the symmetrical-component transform of the three phase
/// currents entering `branch_id` at its from/HV side. The branch must carry
/// all three phases; |I1| = 0 is an error.
double sequence_unbalance(const PowerFlowSolution& solution, const std::string& branch_id);

/// Voltage dump: bus_id, phase, v_pu, v_volts_mag, v_deg, zone,
/// lv_circuit_id, mv_feeder_id. Rows ordered by bus id then phase.
std::string voltage_csv(const PowerFlowSolution& solution, const NetworkModel& model);

}  // namespace mvlv
