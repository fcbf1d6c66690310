#include "mvlv/dss.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "mvlv/topology.hpp"

namespace fs = std::filesystem;

namespace mvlv::dss {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& s) {
    // '!' starts a comment anywhere; '//' likewise (the subset has no quoting)
    size_t bang = s.find('!');
    size_t slash = s.find("//");
    size_t cut = std::min(bang == std::string::npos ? s.size() : bang,
                          slash == std::string::npos ? s.size() : slash);
    return s.substr(0, cut);
}

// Canonical property names per element kind. Matching is case-insensitive,
// exact or unambiguous-prefix. Names listed here but unused by the linker
// are accepted for compatibility and ignored.
const std::map<std::string, std::vector<std::string>>& property_table() {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"circuit",
         {"bus1", "basekv", "pu", "angle", "phases", "frequency", "basefreq", "r1", "x1", "r0",
          "x0"}},
        {"linecode",
         {"nphases", "rmatrix", "xmatrix", "cmatrix", "units", "normamps", "emergamps",
          "basefreq"}},
        {"line",
         {"bus1", "bus2", "phases", "linecode", "length", "units", "rmatrix", "xmatrix",
          "cmatrix", "normamps", "emergamps"}},
        {"transformer",
         {"phases", "windings", "buses", "conns", "kvs", "kvas", "taps", "xhl", "%rs", "wdg",
          "bus", "conn", "kv", "kva", "tap", "%r", "numtaps", "mintap", "maxtap"}},
        {"load", {"bus1", "phases", "kv", "kw", "pf", "kvar", "conn", "model", "vminpu",
                  "vmaxpu"}},
        {"regcontrol", {"transformer", "winding", "vreg", "band", "bus"}},
    };
    return table;
}

std::string normalize_key(const std::string& kind, const std::string& key, const std::string& file,
                          int line) {
    const auto& names = property_table().at(kind);
    const std::string k = lower(key);
    std::vector<std::string> hits;
    for (const auto& name : names) {
        if (name == k) return name;  // exact match wins over prefix
        if (name.size() > k.size() && name.compare(0, k.size(), k) == 0) hits.push_back(name);
    }
    if (hits.size() == 1) return hits[0];
    if (hits.empty())
        throw ParseError(file, line, "unknown property '" + key + "' for " + kind);
    std::string joined;
    for (const auto& h : hits) joined += (joined.empty() ? "" : ", ") + h;
    throw ParseError(file, line, "ambiguous property '" + key + "' for " + kind + " (" + joined + ")");
}

bool is_bracket_open(char c) { return c == '[' || c == '('; }
char closing_of(char c) { return c == '[' ? ']' : ')'; }

/// Split a property stream into `key=value` pairs. Values may be bracketed
/// and contain spaces; brackets must close on the same physical line.
std::vector<std::pair<std::string, std::string>> split_properties(const std::string& text,
                                                                  const std::string& file,
                                                                  int line) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t i = 0;
    const size_t n = text.size();
    auto skip_ws = [&] { while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i; };
    while (true) {
        skip_ws();
        if (i >= n) break;
        size_t key_start = i;
        while (i < n && text[i] != '=' && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::string key = text.substr(key_start, i - key_start);
        skip_ws();
        if (i >= n || text[i] != '=')
            throw ParseError(file, line, "expected key=value, got '" + key + "'");
        ++i;  // '='
        skip_ws();
        std::string value;
        if (i < n && is_bracket_open(text[i])) {
            const char close = closing_of(text[i]);
            size_t start = i;
            while (i < n && text[i] != close) ++i;
            if (i >= n)
                throw ParseError(file, line,
                                 "unterminated '" + std::string(1, text[start]) +
                                     "' in value of '" + key + "'");
            ++i;  // include closing bracket
            value = text.substr(start, i - start);
        } else {
            size_t start = i;
            while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            value = text.substr(start, i - start);
            if (value.empty())
                throw ParseError(file, line, "missing value for property '" + key + "'");
        }
        out.emplace_back(key, value);
    }
    return out;
}

struct Lexer {
    RawCircuit raw;
    std::set<std::string> active_files;  // cycle detection
    std::set<std::string> names_seen;    // "kind.lowername"
    bool have_circuit = false;
    RawElement* current = nullptr;       // target of '~' continuations

    void lex_file(const fs::path& path) {
        std::error_code ec;
        const fs::path canon = fs::weakly_canonical(path, ec);
        const std::string key = (ec ? path : canon).string();
        if (active_files.count(key))
            throw ParseError(path.string(), 0, "circular Redirect of '" + path.string() + "'");
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open circuit file '" + path.string() + "'");
        active_files.insert(key);

        std::string physical;
        int lineno = 0;
        while (std::getline(in, physical)) {
            ++lineno;
            const std::string text = trim(strip_comment(physical));
            if (text.empty()) continue;
            handle_line(path, text, lineno);
        }
        active_files.erase(key);
    }

    void handle_line(const fs::path& path, const std::string& text, int lineno) {
        const std::string file = path.string();
        if (text[0] == '~') {
            if (!current)
                throw ParseError(file, lineno, "continuation '~' without a preceding element");
            append_properties(*current, text.substr(1), file, lineno);
            return;
        }

        std::istringstream head(text);
        std::string verb;
        head >> verb;
        const std::string v = lower(verb);

        if (v == "clear") {
            if (!raw.elements.empty())
                throw ParseError(file, lineno, "Clear after element definitions is unsupported");
            std::string rest;
            std::getline(head, rest);
            if (!trim(rest).empty())
                throw ParseError(file, lineno, "unexpected text after Clear");
            return;
        }
        if (v == "redirect" || v == "compile") {
            std::string target;
            head >> target;
            if (target.empty())
                throw ParseError(file, lineno, verb + " requires a file argument");
            std::string rest;
            std::getline(head, rest);
            if (!trim(rest).empty())
                throw ParseError(file, lineno, "unexpected text after " + verb + " target");
            fs::path next = path.parent_path() / target;
            raw.include_chain.push_back(next.string());
            RawElement* saved = current;
            current = nullptr;  // '~' cannot continue across file boundaries
            lex_file(next);
            current = saved;
            return;
        }
        if (v == "new") {
            std::string decl;
            head >> decl;
            const size_t dot = decl.find('.');
            if (dot == std::string::npos || dot == 0 || dot + 1 >= decl.size())
                throw ParseError(file, lineno, "expected New <Kind>.<name>, got '" + decl + "'");
            const std::string kind = lower(decl.substr(0, dot));
            const std::string name = decl.substr(dot + 1);
            if (!property_table().count(kind))
                throw ParseError(file, lineno, "unsupported element kind '" + decl.substr(0, dot) + "'");
            if (kind == "circuit") {
                if (have_circuit)
                    throw TopologyError("duplicate circuit declaration '" + name + "' at " + file +
                                        ":" + std::to_string(lineno));
                have_circuit = true;
            }
            if (!names_seen.insert(kind + "." + lower(name)).second)
                throw ParseError(file, lineno, "duplicate " + kind + " '" + name + "'");
            RawElement el;
            el.kind = kind;
            el.name = name;
            el.file = file;
            el.line = lineno;
            raw.elements.push_back(std::move(el));
            current = &raw.elements.back();
            std::string rest;
            std::getline(head, rest);
            append_properties(*current, rest, file, lineno);
            return;
        }
        throw ParseError(file, lineno, "unsupported command '" + verb + "'");
    }

    void append_properties(RawElement& el, const std::string& text, const std::string& file,
                           int lineno) {
        for (auto& [key, value] : split_properties(text, file, lineno)) {
            RawProperty p;
            p.key = normalize_key(el.kind, key, file, lineno);
            p.value = value;
            p.file = file;
            p.line = lineno;
            el.props.push_back(std::move(p));
        }
    }
};

// ---------------------------------------------------------------------------
// value parsing
// ---------------------------------------------------------------------------

double parse_double(const RawProperty& p) {
    try {
        size_t pos = 0;
        double v = std::stod(p.value, &pos);
        if (pos != p.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ParseError(p.file, p.line, "'" + p.value + "' is not a number (property " + p.key + ")");
    }
}

int parse_int(const RawProperty& p) {
    const double v = parse_double(p);
    if (v != std::floor(v))
        throw ParseError(p.file, p.line, "'" + p.value + "' is not an integer (property " + p.key + ")");
    return static_cast<int>(v);
}

std::string strip_brackets(const std::string& v) {
    std::string s = trim(v);
    if (!s.empty() && is_bracket_open(s.front()) && s.back() == closing_of(s.front()))
        return trim(s.substr(1, s.size() - 2));
    return s;
}

std::vector<std::string> parse_array(const RawProperty& p) {
    std::string body = strip_brackets(p.value);
    std::replace(body.begin(), body.end(), ',', ' ');
    std::istringstream in(body);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    if (out.empty())
        throw ParseError(p.file, p.line, "empty array for property " + p.key);
    return out;
}

/// Rows separated by '|'; lower-triangular or full square accepted.
Eigen::MatrixXd parse_matrix(const RawProperty& p, int n) {
    std::string body = strip_brackets(p.value);
    std::vector<std::vector<double>> rows;
    std::stringstream ss(body);
    std::string row_text;
    while (std::getline(ss, row_text, '|')) {
        std::replace(row_text.begin(), row_text.end(), ',', ' ');
        std::istringstream rin(row_text);
        std::vector<double> row;
        std::string tok;
        while (rin >> tok) {
            try {
                size_t pos = 0;
                row.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ParseError(p.file, p.line,
                                 "'" + tok + "' is not a number in matrix " + p.key);
            }
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (static_cast<int>(rows.size()) != n)
        throw ParseError(p.file, p.line,
                         p.key + " has " + std::to_string(rows.size()) + " row(s), expected " +
                             std::to_string(n));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    bool lower_triangular = true;
    for (int i = 0; i < n; ++i)
        if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != i + 1) lower_triangular = false;
    if (lower_triangular) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
                m(j, i) = m(i, j);
            }
        return m;
    }
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != n)
            throw ParseError(p.file, p.line,
                             p.key + " row " + std::to_string(i + 1) +
                                 " must have " + std::to_string(i + 1) + " (triangular) or " +
                                 std::to_string(n) + " (full) entries");
        for (int j = 0; j < n; ++j) m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    return m;
}

struct BusRef {
    std::string bus;
    std::vector<Phase> phase_list;  ///< in written order; empty = no suffix (all three)
    bool explicit_suffix = false;
};

BusRef parse_bus_ref(const RawProperty& p) {
    const std::string s = trim(p.value);
    BusRef ref;
    size_t dot = s.find('.');
    ref.bus = s.substr(0, dot == std::string::npos ? s.size() : dot);
    if (ref.bus.empty())
        throw ParseError(p.file, p.line, "empty bus name in reference '" + s + "'");
    if (dot == std::string::npos) return ref;
    ref.explicit_suffix = true;
    std::stringstream ss(s.substr(dot + 1));
    std::string part;
    std::set<int> seen;
    while (std::getline(ss, part, '.')) {
        if (part.size() != 1 || part[0] < '0' || part[0] > '3')
            throw ParseError(p.file, p.line, "bad phase suffix '." + part + "' in '" + s + "'");
        const int d = part[0] - '0';
        if (d == 0) continue;  // explicit neutral/ground terminal: implicitly grounded
        if (!seen.insert(d).second)
            throw ParseError(p.file, p.line, "repeated phase in bus reference '" + s + "'");
        ref.phase_list.push_back(static_cast<Phase>(d - 1));
    }
    if (ref.phase_list.empty())
        throw ParseError(p.file, p.line, "bus reference '" + s + "' names no phase conductor");
    return ref;
}

double unit_to_meters(const std::string& unit, const std::string& file, int line) {
    const std::string u = lower(unit);
    if (u == "m" || u == "meter" || u == "meters") return 1.0;
    if (u == "km") return 1000.0;
    if (u == "cm") return 0.01;
    if (u == "ft") return 0.3048;
    if (u == "kft") return 304.8;
    if (u == "mi" || u == "miles") return 1609.344;
    throw ParseError(file, line, "unsupported length unit '" + unit + "'");
}

WindingConnection parse_connection(const std::string& raw, const std::string& file, int line) {
    const std::string c = lower(raw);
    if (c == "wye" || c == "y" || c == "ln") return WindingConnection::WyeGrounded;
    if (c == "delta" || c == "d" || c == "ll") return WindingConnection::Delta;
    throw ParseError(file, line, "unsupported winding connection '" + raw + "'");
}

// ---------------------------------------------------------------------------
// linking
// ---------------------------------------------------------------------------

struct LinecodeDef {
    Eigen::MatrixXd r, x;          // per meter
    int nphases = 3;
    const RawElement* element = nullptr;
};

void check_cmatrix_zero(const RawProperty& p, int n) {
    const Eigen::MatrixXd c = parse_matrix(p, n);
    if (c.cwiseAbs().maxCoeff() != 0.0)
        throw ParseError(p.file, p.line,
                         "nonzero cmatrix: shunt capacitance is outside the supported subset");
}

const RawProperty& require(const RawElement& el, const std::string& key) {
    const RawProperty* p = el.find(key);
    if (!p)
        throw ParseError(el.file, el.line,
                         el.kind + " '" + el.name + "' is missing required property '" + key + "'");
    return *p;
}

PhaseSet phases_from_ref(const BusRef& ref, int declared, const RawElement& el) {
    std::vector<Phase> list = ref.phase_list;
    if (!ref.explicit_suffix) {
        if (declared != 3)
            throw ParseError(el.file, el.line,
                             el.kind + " '" + el.name + "': bus reference '" + ref.bus +
                                 "' has no phase suffix but phases=" + std::to_string(declared));
        list = {Phase::A, Phase::B, Phase::C};
    }
    if (static_cast<int>(list.size()) != declared)
        throw ParseError(el.file, el.line,
                         el.kind + " '" + el.name + "': phase suffix names " +
                             std::to_string(list.size()) + " conductor(s) but phases=" +
                             std::to_string(declared));
    return PhaseSet::from_list(list);
}

}  // namespace

const RawProperty* RawElement::find(const std::string& key) const {
    const RawProperty* last = nullptr;
    for (const auto& p : props)
        if (p.key == key) last = &p;  // later assignment wins, as in the source dialect
    return last;
}

RawCircuit read_raw(const std::string& master_path) {
    Lexer lx;
    lx.raw.source_file = master_path;
    lx.lex_file(master_path);
    if (!lx.have_circuit)
        throw TopologyError("no circuit/source declaration found in '" + master_path + "'");
    return lx.raw;
}

NetworkModel link(const RawCircuit& raw) {
    NetworkModelBuilder builder;

    std::map<std::string, LinecodeDef> linecodes;

    // pass 1: linecodes (referenced definitions may live anywhere in the chain)
    for (const auto& el : raw.elements) {
        if (el.kind != "linecode") continue;
        LinecodeDef def;
        def.element = &el;
        def.nphases = el.find("nphases") ? parse_int(*el.find("nphases")) : 3;
        if (def.nphases < 1 || def.nphases > 3)
            throw ParseError(el.file, el.line, "linecode '" + el.name + "': nphases must be 1..3");
        const Eigen::MatrixXd r = parse_matrix(require(el, "rmatrix"), def.nphases);
        const Eigen::MatrixXd x = parse_matrix(require(el, "xmatrix"), def.nphases);
        if (const RawProperty* c = el.find("cmatrix")) check_cmatrix_zero(*c, def.nphases);
        const RawProperty* u = el.find("units");
        const double per = u ? unit_to_meters(u->value, u->file, u->line) : 1.0;
        def.r = r / per;
        def.x = x / per;
        linecodes.emplace(lower(el.name), std::move(def));
    }

    // pass 2: everything else
    for (const auto& el : raw.elements) {
        if (el.kind == "circuit") {
            SourceInfo src;
            const RawProperty* bus = el.find("bus1");
            BusRef ref;
            if (bus) {
                ref = parse_bus_ref(*bus);
            } else {
                ref.bus = "sourcebus";
            }
            const int declared = el.find("phases") ? parse_int(*el.find("phases")) : 3;
            src.phases = phases_from_ref(ref, declared, el);
            src.bus = ref.bus;
            src.base_kV = parse_double(require(el, "basekv"));
            if (src.base_kV <= 0.0)
                throw ParseError(el.file, el.line, "circuit basekv must be positive");
            src.pu = el.find("pu") ? parse_double(*el.find("pu")) : 1.0;
            src.angle_deg = el.find("angle") ? parse_double(*el.find("angle")) : 0.0;
            double freq = 50.0;
            if (const RawProperty* f = el.find("frequency")) freq = parse_double(*f);
            if (const RawProperty* f = el.find("basefreq")) freq = parse_double(*f);
            const RawProperty* r1 = el.find("r1");
            const RawProperty* x1 = el.find("x1");
            if (r1 || x1)
                src.z1_ohm = Complex(r1 ? parse_double(*r1) : 0.0, x1 ? parse_double(*x1) : 0.0);
            const RawProperty* r0 = el.find("r0");
            const RawProperty* x0 = el.find("x0");
            if (r0 || x0)
                src.z0_ohm = Complex(r0 ? parse_double(*r0) : 0.0, x0 ? parse_double(*x0) : 0.0);
            builder.set_name(el.name);
            builder.set_frequency(freq);
            builder.set_source(std::move(src));
            continue;
        }
        if (el.kind == "linecode") continue;

        if (el.kind == "line") {
            const BusRef b1 = parse_bus_ref(require(el, "bus1"));
            const BusRef b2 = parse_bus_ref(require(el, "bus2"));
            if (b1.phase_list != b2.phase_list)
                throw ParseError(el.file, el.line,
                                 "line '" + el.name +
                                     "': bus1/bus2 phase suffixes differ (permuted connections "
                                     "are outside the supported subset)");
            int declared = 3;
            if (const RawProperty* p = el.find("phases")) declared = parse_int(*p);
            else if (b1.explicit_suffix) declared = static_cast<int>(b1.phase_list.size());
            const PhaseSet phases = phases_from_ref(b1, declared, el);

            const RawProperty* lc = el.find("linecode");
            const bool has_inline = el.find("rmatrix") || el.find("xmatrix");
            if (lc && has_inline)
                throw ParseError(el.file, el.line,
                                 "line '" + el.name + "': give either linecode or inline matrices, not both");
            if (!lc && !has_inline)
                throw ParseError(el.file, el.line,
                                 "line '" + el.name + "': needs a linecode or inline rmatrix/xmatrix");

            const RawProperty* uprop = el.find("units");
            double length = el.find("length") ? parse_double(*el.find("length")) : 1.0;
            if (length <= 0.0)
                throw ParseError(el.file, el.line, "line '" + el.name + "': length must be positive");

            Eigen::MatrixXd r_per_m, x_per_m;
            if (lc) {
                auto it = linecodes.find(lower(lc->value));
                if (it == linecodes.end())
                    throw LinkError("line '" + el.name + "' references undefined linecode '" +
                                    lc->value + "' (" + lc->file + ":" + std::to_string(lc->line) + ")");
                const LinecodeDef& def = it->second;
                if (def.nphases != phases.size())
                    throw ParseError(el.file, el.line,
                                     "line '" + el.name + "' has " + std::to_string(phases.size()) +
                                         " phase(s) but linecode '" + lc->value + "' has " +
                                         std::to_string(def.nphases));
                r_per_m = def.r;
                x_per_m = def.x;
                // line units apply to length only; the linecode carries its own unit
                const double to_m = uprop ? unit_to_meters(uprop->value, uprop->file, uprop->line) : 1.0;
                length *= to_m;
            } else {
                const int n = phases.size();
                r_per_m = parse_matrix(require(el, "rmatrix"), n);
                x_per_m = parse_matrix(require(el, "xmatrix"), n);
                if (const RawProperty* c = el.find("cmatrix")) check_cmatrix_zero(*c, n);
                const double to_m = uprop ? unit_to_meters(uprop->value, uprop->file, uprop->line) : 1.0;
                r_per_m /= to_m;
                x_per_m /= to_m;
                length *= to_m;
            }

            NetworkModelBuilder::Line line;
            line.id = el.name;
            line.from = b1.bus;
            line.to = b2.bus;
            line.phases = phases;
            line.length_m = length;
            line.z_ohm = (r_per_m.cast<Complex>() + Complex(0, 1) * x_per_m.cast<Complex>()) * length;
            builder.add_line(std::move(line));
            continue;
        }

        if (el.kind == "load") {
            const BusRef b = parse_bus_ref(require(el, "bus1"));
            int declared = 3;
            if (const RawProperty* p = el.find("phases")) declared = parse_int(*p);
            else if (b.explicit_suffix) declared = static_cast<int>(b.phase_list.size());
            if (declared != 1 && declared != 3)
                throw ParseError(el.file, el.line,
                                 "load '" + el.name +
                                     "': only single-phase or balanced three-phase loads are supported");
            const PhaseSet phases = phases_from_ref(b, declared, el);
            if (const RawProperty* conn = el.find("conn")) {
                if (parse_connection(conn->value, conn->file, conn->line) != WindingConnection::WyeGrounded)
                    throw ParseError(conn->file, conn->line,
                                     "load '" + el.name + "': delta-connected loads are unsupported");
            }
            if (const RawProperty* mdl = el.find("model")) {
                if (parse_int(*mdl) != 1)
                    throw ParseError(mdl->file, mdl->line,
                                     "load '" + el.name + "': only model=1 (constant power) is supported");
            }
            NetworkModelBuilder::Load load;
            load.id = el.name;
            load.bus = b.bus;
            if (declared == 1) load.phase = phases.list().front();
            load.kw = parse_double(require(el, "kw"));
            const RawProperty* pf = el.find("pf");
            const RawProperty* kvar = el.find("kvar");
            if (pf && kvar)
                throw ParseError(kvar->file, kvar->line,
                                 "load '" + el.name + "': give pf or kvar, not both");
            if (kvar) {
                const double q = parse_double(*kvar);
                if (q < 0.0)
                    throw ParseError(kvar->file, kvar->line,
                                     "load '" + el.name + "': leading (negative) kvar is unsupported");
                const double s = std::hypot(load.kw, q);
                load.pf = s == 0.0 ? 1.0 : load.kw / s;
                if (load.pf <= 0.0)
                    throw ParseError(kvar->file, kvar->line,
                                     "load '" + el.name + "': kvar without kw gives power factor 0");
            } else {
                load.pf = pf ? parse_double(*pf) : 1.0;
            }
            builder.add_load(std::move(load));
            continue;
        }

        if (el.kind == "transformer") {
            if (const RawProperty* w = el.find("windings")) {
                if (parse_int(*w) != 2)
                    throw ParseError(w->file, w->line,
                                     "transformer '" + el.name + "': only 2-winding transformers are supported");
            }
            if (const RawProperty* p = el.find("phases")) {
                if (parse_int(*p) != 3)
                    throw ParseError(p->file, p->line,
                                     "transformer '" + el.name + "': only three-phase banks are supported");
            }

            // winding-indexed properties arrive either as arrays or via wdg=N
            std::array<std::optional<std::string>, 2> bus, conn, kv, kva, tap, pct_r;
            auto windex = [&el](const RawProperty& p, int wdg) -> size_t {
                if (wdg != 1 && wdg != 2)
                    throw ParseError(p.file, p.line,
                                     "transformer '" + el.name + "': wdg must be 1 or 2");
                return static_cast<size_t>(wdg - 1);
            };
            auto assign_array = [&el](std::array<std::optional<std::string>, 2>& slot,
                                      const RawProperty& p) {
                auto vals = parse_array(p);
                if (vals.size() != 2)
                    throw ParseError(p.file, p.line,
                                     "transformer '" + el.name + "': " + p.key +
                                         " must list exactly 2 windings");
                slot[0] = vals[0];
                slot[1] = vals[1];
            };
            int wdg = 0;
            for (const auto& p : el.props) {
                if (p.key == "wdg") wdg = parse_int(p);
                else if (p.key == "buses") assign_array(bus, p);
                else if (p.key == "conns") assign_array(conn, p);
                else if (p.key == "kvs") assign_array(kv, p);
                else if (p.key == "kvas") assign_array(kva, p);
                else if (p.key == "taps") assign_array(tap, p);
                else if (p.key == "%rs") assign_array(pct_r, p);
                else if (p.key == "bus") bus[windex(p, wdg)] = p.value;
                else if (p.key == "conn") conn[windex(p, wdg)] = p.value;
                else if (p.key == "kv") kv[windex(p, wdg)] = p.value;
                else if (p.key == "kva") kva[windex(p, wdg)] = p.value;
                else if (p.key == "tap") tap[windex(p, wdg)] = p.value;
                else if (p.key == "%r") pct_r[windex(p, wdg)] = p.value;
            }
            for (const auto* missing : {&bus, &kv}) {
                if (!(*missing)[0] || !(*missing)[1])
                    throw ParseError(el.file, el.line,
                                     "transformer '" + el.name + "': both windings need bus and kv");
            }
            auto num = [&el](const std::optional<std::string>& s, const char* what) {
                try {
                    return std::stod(*s);
                } catch (const std::exception&) {
                    throw ParseError(el.file, el.line,
                                     "transformer '" + el.name + "': bad " + std::string(what) +
                                         " value '" + *s + "'");
                }
            };

            NetworkModelBuilder::Transformer t;
            t.id = el.name;
            RawProperty synth_prop{"buses", "", el.file, el.line};
            synth_prop.value = *bus[0];
            BusRef hv_ref = parse_bus_ref(synth_prop);
            synth_prop.value = *bus[1];
            BusRef lv_ref = parse_bus_ref(synth_prop);
            for (const BusRef* r : {&hv_ref, &lv_ref}) {
                if (r->explicit_suffix && PhaseSet::from_list(r->phase_list) != PhaseSet::all3())
                    throw ParseError(el.file, el.line,
                                     "transformer '" + el.name + "': terminals must carry phases 1.2.3");
            }
            t.hv = hv_ref.bus;
            t.lv = lv_ref.bus;
            t.hv_kV = num(kv[0], "kv");
            t.lv_kV = num(kv[1], "kv");
            if (t.hv_kV < t.lv_kV)
                throw ParseError(el.file, el.line,
                                 "transformer '" + el.name +
                                     "': winding 1 must be the HV winding in this subset");
            t.hv_conn = conn[0] ? parse_connection(*conn[0], el.file, el.line)
                                : WindingConnection::WyeGrounded;
            t.lv_conn = conn[1] ? parse_connection(*conn[1], el.file, el.line)
                                : WindingConnection::WyeGrounded;
            if (!kva[0] && !kva[1])
                throw ParseError(el.file, el.line, "transformer '" + el.name + "': kva rating required");
            const double kva1 = kva[0] ? num(kva[0], "kva") : num(kva[1], "kva");
            const double kva2 = kva[1] ? num(kva[1], "kva") : kva1;
            if (std::abs(kva1 - kva2) > 1e-9 * std::max(kva1, kva2))
                throw ParseError(el.file, el.line,
                                 "transformer '" + el.name + "': winding ratings must match");
            t.rating_kVA = kva1;
            const double xhl = el.find("xhl") ? parse_double(*el.find("xhl")) : 7.0;
            const double r_total =
                (pct_r[0] ? num(pct_r[0], "%r") : 0.0) + (pct_r[1] ? num(pct_r[1], "%r") : 0.0);
            t.z_pu = Complex(r_total / 100.0, xhl / 100.0);
            const double tap1 = tap[0] ? num(tap[0], "tap") : 1.0;
            const double tap2 = tap[1] ? num(tap[1], "tap") : 1.0;
            if (tap2 <= 0.0 || tap1 <= 0.0)
                throw ParseError(el.file, el.line, "transformer '" + el.name + "': taps must be positive");
            t.tap = tap1 / tap2;
            if (const RawProperty* p = el.find("mintap")) t.tap_min = parse_double(*p);
            if (const RawProperty* p = el.find("maxtap")) t.tap_max = parse_double(*p);
            if (const RawProperty* p = el.find("numtaps")) t.tap_steps = parse_int(*p);
            builder.add_transformer(std::move(t));
            continue;
        }

        if (el.kind == "regcontrol") continue;  // applied after transformers exist
    }

    // regulator controls attach to already-declared transformers
    std::set<std::string> regulated;
    for (const auto& el : raw.elements) {
        if (el.kind != "regcontrol") continue;
        const std::string target = require(el, "transformer").value;
        NetworkModelBuilder::Transformer* found = nullptr;
        for (auto& t : builder.transformers())
            if (lower(t.id) == lower(target)) found = &t;
        if (!found)
            throw LinkError("regcontrol '" + el.name + "' references undefined transformer '" +
                            target + "' (" + el.file + ":" + std::to_string(el.line) + ")");
        if (!regulated.insert(lower(target)).second)
            throw ParseError(el.file, el.line,
                             "transformer '" + target + "' has more than one regcontrol");
        found->regulated = true;
        const int winding = el.find("winding") ? parse_int(*el.find("winding")) : 2;
        if (winding != 1 && winding != 2)
            throw ParseError(el.file, el.line, "regcontrol winding must be 1 or 2");
        found->reg_bus = winding == 1 ? found->hv : found->lv;
        if (const RawProperty* b = el.find("bus")) found->reg_bus = parse_bus_ref(*b).bus;
        if (const RawProperty* v = el.find("vreg")) found->reg_setpoint_pu = parse_double(*v);
        if (const RawProperty* b = el.find("band")) found->reg_band_pu = parse_double(*b);
    }

    return assign_bases(builder.build());
}

NetworkModel parse_circuit(const std::string& master_path) {
    return link(read_raw(master_path));
}

}  // namespace mvlv::dss
