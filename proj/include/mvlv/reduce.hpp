#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mvlv/demand.hpp"
#include "mvlv/network_model.hpp"

namespace mvlv {

struct SpliceEntry {
    std::string removed_bus;
    std::string merged_branch_a;
    std::string merged_branch_b;
    std::string resulting_branch;
};

struct SpliceLog {
    std::vector<SpliceEntry> entries;
    int nodes_before = 0;
    int nodes_after = 0;
};

struct ReductionReport {
    double eps_v = 0.0;
    double eps_loss = 0.0;
    int nodes_before = 0;
    int nodes_after = 0;
    double reduction_factor = 1.0;
};

/// Eliminate every load-free, source-free, transformer-free bus with exactly
/// two incident line branches of identical phase sets by summing the two
/// series impedance matrices, repeated to a fixpoint. Exact for shunt-free
/// models: the eliminated equations are interior nodes of series chains.
std::pair<NetworkModel, SpliceLog> splice(const NetworkModel& model);

/// Solve both models under `demand` (tight 1e-12 tolerance) and report the
/// relative error in complex load-bus voltages (Euclidean norm, loads in
/// sorted-id order, phases A<B<C within a load) and in total losses.
ReductionReport certify(const NetworkModel& original, const NetworkModel& spliced,
                        const DemandScenario& demand);

/// Keys: nodes_before, nodes_after, eps_v, eps_loss.
nlohmann::json to_json(const ReductionReport& report);

}  // namespace mvlv
