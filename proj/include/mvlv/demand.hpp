#pragma once

#include <map>
#include <string>

namespace mvlv {

struct LoadSetting {
    double kw = 0.0;  ///< may be negative (generation injection)
    double pf = 1.0;  ///< in (0, 1]
};

/// Per-load complex power assignment layered over a NetworkModel. Loads not
/// listed draw zero power.
struct DemandScenario {
    std::string label;
    std::map<std::string, LoadSetting> settings;

    LoadSetting get(const std::string& load_id) const {
        auto it = settings.find(load_id);
        return it == settings.end() ? LoadSetting{} : it->second;
    }
};

}  // namespace mvlv
