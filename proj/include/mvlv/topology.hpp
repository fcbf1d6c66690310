#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mvlv/network_model.hpp"

namespace mvlv {

/// Propagate per-bus voltage bases from the source across transformer winding
/// ratios, label MV/LV zones (base >= 1 kV is MV) and derive the grouping
/// keys used by reporting: mv_feeder_id is the source-adjacent bus heading
/// the feeder, lv_circuit_id is the nearest upstream transformer (or the
/// circuit name on transformer-less LV models).
///
/// `source_kV` of 0 uses the source's declared base. Throws TopologyError
/// when two paths imply different bases for one bus.
NetworkModel assign_bases(const NetworkModel& model, double source_kV = 0.0);

struct IslandInfo {
    int bus_count = 0;
    std::string seed_bus;
};

struct TopologyReport {
    bool is_radial = false;
    std::vector<IslandInfo> islands;
    int node_count = 0;                    ///< bus-phase pairs
    std::map<int, int> degree_histogram;   ///< bus degree -> bus count
};

TopologyReport topology_report(const NetworkModel& model);

/// Stable keys: is_radial, islands, node_count, degree_histogram.
nlohmann::json to_json(const TopologyReport& report);

}  // namespace mvlv
