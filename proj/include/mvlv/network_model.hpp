#pragma once

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "mvlv/errors.hpp"
#include "mvlv/phase.hpp"

namespace mvlv {

using Complex = std::complex<double>;

enum class Zone { MV, LV };

inline const char* zone_name(Zone z) { return z == Zone::MV ? "MV" : "LV"; }

enum class WindingConnection { Delta, WyeGrounded };

struct Bus {
    std::string id;
    PhaseSet phases;
    double base_kV = 0.0;  ///< line-to-line kV; 0 until assign_bases has run
    Zone zone = Zone::MV;
    std::string lv_circuit_id;  ///< grouping key for LV statistics; empty = unset
    std::string mv_feeder_id;   ///< MV feeder grouping key; empty = unset
};

/// A series line section: per-phase impedance matrix over the full length.
struct LineBranch {
    std::string id;
    int from_bus = -1;
    int to_bus = -1;
    PhaseSet phases;
    Eigen::MatrixXcd z_ohm;  ///< n x n symmetric, rows ordered A<B<C within `phases`
    double length_m = 0.0;
};

/// Two-winding transformer. The single tap multiplies the HV winding
/// voltage, so raising the tap lowers the LV-side voltage.
struct TransformerBranch {
    std::string id;
    int hv_bus = -1;
    int lv_bus = -1;
    WindingConnection hv_conn = WindingConnection::Delta;
    WindingConnection lv_conn = WindingConnection::WyeGrounded;
    double hv_kV = 0.0;  ///< winding rating, line-to-line
    double lv_kV = 0.0;
    double rating_kVA = 0.0;
    Complex z_pu;  ///< series impedance, per-unit on own rating
    double tap = 1.0;
    double tap_min = 0.9;
    double tap_max = 1.1;
    int tap_steps = 32;
    bool regulated = false;
    std::string reg_bus;  ///< regulated bus id; empty means the LV bus
    double reg_setpoint_pu = 1.0;
    double reg_band_pu = 0.0125;  ///< half-width of the acceptable band

    double tap_step_size() const { return (tap_max - tap_min) / tap_steps; }
};

/// Constant-power load. `phase` set = single-phase phase-to-neutral;
/// unset = balanced three-phase (S/3 per phase, wye).
struct LoadPoint {
    std::string id;
    int bus = -1;
    std::optional<Phase> phase;
    double kw = 0.0;
    double pf = 1.0;  ///< lagging power factor in (0, 1]

    PhaseSet phases() const { return phase ? PhaseSet::single(*phase) : PhaseSet::all3(); }
};

struct SourceInfo {
    std::string bus;
    PhaseSet phases = PhaseSet::all3();
    double pu = 1.0;
    double angle_deg = 0.0;
    double base_kV = 0.0;
    /// Optional Thevenin impedance, retained for file round-trips. The solver
    /// holds the slack bus at the source voltage and does not stamp it.
    std::optional<Complex> z1_ohm;
    std::optional<Complex> z0_ohm;
};

class NetworkModelBuilder;

/// Immutable multi-phase circuit graph. Construct via NetworkModelBuilder;
/// all transformations return new models.
class NetworkModel {
public:
    const std::string& name() const { return name_; }
    double base_frequency() const { return base_frequency_; }
    const SourceInfo& source() const { return source_; }
    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<LineBranch>& lines() const { return lines_; }
    const std::vector<TransformerBranch>& transformers() const { return transformers_; }
    const std::vector<LoadPoint>& loads() const { return loads_; }

    int bus_index(const std::string& id) const {
        auto it = bus_index_.find(id);
        return it == bus_index_.end() ? -1 : it->second;
    }
    const Bus& bus(int idx) const { return buses_[static_cast<size_t>(idx)]; }
    int source_bus() const { return source_bus_; }

    int branch_count() const {
        return static_cast<int>(lines_.size() + transformers_.size());
    }

    /// Bus-phase pairs; a three-phase bus contributes 3. Neutrals are implicit
    /// and never counted.
    int node_count() const {
        int n = 0;
        for (const auto& b : buses_) n += b.phases.size();
        return n;
    }

    bool bases_assigned() const { return bases_assigned_; }

    double total_load_kw() const {
        double s = 0.0;
        for (const auto& l : loads_) s += l.kw;
        return s;
    }

private:
    friend class NetworkModelBuilder;
    NetworkModel() = default;

    std::string name_;
    double base_frequency_ = 50.0;
    SourceInfo source_;
    int source_bus_ = -1;
    std::vector<Bus> buses_;
    std::vector<LineBranch> lines_;
    std::vector<TransformerBranch> transformers_;
    std::vector<LoadPoint> loads_;
    std::unordered_map<std::string, int> bus_index_;
    bool bases_assigned_ = false;
};

/// Mutable staging area for assembling a NetworkModel. Branches and loads
/// reference buses by id; buses are created implicitly from endpoints.
/// build() links, validates the model invariants and freezes the result.
class NetworkModelBuilder {
public:
    struct Line {
        std::string id, from, to;
        PhaseSet phases;
        Eigen::MatrixXcd z_ohm;
        double length_m = 0.0;
    };
    struct Transformer {
        std::string id, hv, lv;
        WindingConnection hv_conn = WindingConnection::Delta;
        WindingConnection lv_conn = WindingConnection::WyeGrounded;
        double hv_kV = 0.0, lv_kV = 0.0, rating_kVA = 0.0;
        Complex z_pu;
        double tap = 1.0, tap_min = 0.9, tap_max = 1.1;
        int tap_steps = 32;
        bool regulated = false;
        std::string reg_bus;
        double reg_setpoint_pu = 1.0, reg_band_pu = 0.0125;
    };
    struct Load {
        std::string id, bus;
        std::optional<Phase> phase;
        double kw = 0.0, pf = 1.0;
    };

    NetworkModelBuilder() = default;
    /// Seed the builder with an existing model (for transformations).
    explicit NetworkModelBuilder(const NetworkModel& m);

    void set_name(std::string n) { name_ = std::move(n); }
    void set_frequency(double hz) { base_frequency_ = hz; }
    void set_source(SourceInfo s) { source_ = std::move(s); }
    const SourceInfo& source() const { return source_; }

    void add_line(Line l) { lines_.push_back(std::move(l)); }
    void add_transformer(Transformer t) { transformers_.push_back(std::move(t)); }
    void add_load(Load l) { loads_.push_back(std::move(l)); }

    std::vector<Line>& lines() { return lines_; }
    std::vector<Transformer>& transformers() { return transformers_; }
    std::vector<Load>& loads() { return loads_; }

    /// Per-bus metadata carried into the built model (bases, zones, groups).
    std::map<std::string, Bus>& bus_meta() { return bus_meta_; }
    void mark_bases_assigned(bool v = true) { bases_assigned_ = v; }

    /// Validate invariants and produce the immutable model.
    NetworkModel build() const;

private:
    std::string name_;
    double base_frequency_ = 50.0;
    SourceInfo source_;
    std::vector<Line> lines_;
    std::vector<Transformer> transformers_;
    std::vector<Load> loads_;
    std::map<std::string, Bus> bus_meta_;
    bool bases_assigned_ = false;
};

}  // namespace mvlv
