#include <cmath>
#include <filesystem>
#include <sstream>

#include "mvlv/dss.hpp"
#include "mvlv/text_format.hpp"

namespace fs = std::filesystem;

namespace mvlv::dss {

namespace {

std::string bus_ref(const NetworkModel& m, int bus_idx, PhaseSet phases) {
    std::string s = m.bus(bus_idx).id;
    for (Phase p : phases.list()) s += "." + std::to_string(static_cast<int>(p) + 1);
    return s;
}

std::string matrix_text(const Eigen::MatrixXcd& z, double scale, bool imag) {
    // lower-triangular form; rows separated by '|'
    std::string out = "[";
    for (int i = 0; i < z.rows(); ++i) {
        if (i) out += " | ";
        for (int j = 0; j <= i; ++j) {
            if (j) out += ' ';
            out += fmt12((imag ? z(i, j).imag() : z(i, j).real()) * scale);
        }
    }
    out += "]";
    return out;
}

const char* conn_text(WindingConnection c) {
    return c == WindingConnection::Delta ? "delta" : "wye";
}

}  // namespace

std::vector<std::string> write_circuit(const NetworkModel& model, const std::string& out_dir) {
    const auto& src = model.source();

    std::ostringstream master;
    master << "Clear\n";
    master << "New Circuit." << model.name() << " bus1="
           << bus_ref(model, model.source_bus(), src.phases) << " basekv=" << fmt12(src.base_kV)
           << " pu=" << fmt12(src.pu) << " angle=" << fmt12(src.angle_deg)
           << " frequency=" << fmt12(model.base_frequency())
           << " phases=" << src.phases.size();
    if (src.z1_ohm)
        master << " r1=" << fmt12(src.z1_ohm->real()) << " x1=" << fmt12(src.z1_ohm->imag());
    if (src.z0_ohm)
        master << " r0=" << fmt12(src.z0_ohm->real()) << " x0=" << fmt12(src.z0_ohm->imag());
    master << "\n";

    std::ostringstream lines;
    for (const auto& l : model.lines()) {
        const double len = l.length_m > 0.0 ? l.length_m : 1.0;
        lines << "New Line." << l.id << " bus1=" << bus_ref(model, l.from_bus, l.phases)
              << " bus2=" << bus_ref(model, l.to_bus, l.phases) << " phases=" << l.phases.size()
              << " length=" << fmt12(len) << " units=m"
              << "\n~ rmatrix=" << matrix_text(l.z_ohm, 1.0 / len, false)
              << "\n~ xmatrix=" << matrix_text(l.z_ohm, 1.0 / len, true) << "\n";
    }

    std::ostringstream xfmrs;
    std::ostringstream regs;
    for (const auto& t : model.transformers()) {
        xfmrs << "New Transformer." << t.id << " phases=3 windings=2 buses=["
              << bus_ref(model, t.hv_bus, PhaseSet::all3()) << " "
              << bus_ref(model, t.lv_bus, PhaseSet::all3()) << "] conns=[" << conn_text(t.hv_conn)
              << " " << conn_text(t.lv_conn) << "] kvs=[" << fmt12(t.hv_kV) << " " << fmt12(t.lv_kV)
              << "] kvas=[" << fmt12(t.rating_kVA) << " " << fmt12(t.rating_kVA) << "]"
              << "\n~ xhl=" << fmt12(t.z_pu.imag() * 100.0) << " %rs=["
              << fmt12(t.z_pu.real() * 50.0) << " " << fmt12(t.z_pu.real() * 50.0) << "] taps=["
              << fmt12(t.tap) << " 1] mintap=" << fmt12(t.tap_min) << " maxtap=" << fmt12(t.tap_max)
              << " numtaps=" << t.tap_steps << "\n";
        if (t.regulated) {
            regs << "New RegControl.reg_" << t.id << " transformer=" << t.id;
            const std::string& target = t.reg_bus;
            if (target.empty() || target == model.bus(t.lv_bus).id) {
                regs << " winding=2";
            } else if (target == model.bus(t.hv_bus).id) {
                regs << " winding=1";
            } else {
                regs << " winding=2 bus=" << target;
            }
            regs << " vreg=" << fmt12(t.reg_setpoint_pu) << " band=" << fmt12(t.reg_band_pu)
                 << "\n";
        }
    }

    std::ostringstream loads;
    for (const auto& l : model.loads()) {
        loads << "New Load." << l.id << " bus1=" << bus_ref(model, l.bus, l.phases())
              << " phases=" << (l.phase ? 1 : 3);
        if (model.bases_assigned()) {
            const double base = model.bus(l.bus).base_kV;
            loads << " kv=" << fmt12(l.phase ? base / std::sqrt(3.0) : base);
        }
        loads << " kw=" << fmt12(l.kw) << " pf=" << fmt12(l.pf) << " model=1\n";
    }

    struct Section {
        const char* file;
        std::string content;
    };
    std::vector<Section> sections;
    if (!model.lines().empty()) sections.push_back({"lines.dss", lines.str()});
    if (!model.transformers().empty()) sections.push_back({"transformers.dss", xfmrs.str()});
    if (!model.loads().empty()) sections.push_back({"loads.dss", loads.str()});
    if (!regs.str().empty()) sections.push_back({"regcontrols.dss", regs.str()});
    for (const auto& s : sections) master << "Redirect " << s.file << "\n";

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& content) {
        const std::string path = (fs::path(out_dir) / name).string();
        try {
            write_text_file(path, content);
        } catch (const IoError&) {
            for (const auto& w : written) fs::remove(w, ec);  // no partial model left behind
            throw;
        }
        written.push_back(path);
    };
    emit("master.dss", master.str());
    for (const auto& s : sections) emit(s.file, s.content);
    return written;
}

}  // namespace mvlv::dss
