#pragma once

#include <string>
#include <vector>

#include "mvlv/network_model.hpp"

namespace mvlv::dss {

/// One `key=value` occurrence, with the key already normalized to its
/// canonical full name and the exact source location retained.
struct RawProperty {
    std::string key;
    std::string value;  ///< raw text, brackets included for matrix/array values
    std::string file;
    int line = 0;
};

struct RawElement {
    std::string kind;  ///< canonical lowercase: circuit, linecode, line, transformer, load, regcontrol
    std::string name;
    std::vector<RawProperty> props;
    std::string file;
    int line = 0;

    const RawProperty* find(const std::string& key) const;
};

/// Lexed but not yet linked circuit description.
struct RawCircuit {
    std::vector<RawElement> elements;
    std::string source_file;
    std::vector<std::string> include_chain;  ///< files pulled in via Redirect/Compile
};

/// Lex a master file and its include chain into raw elements. Unknown element
/// kinds, unknown or ambiguous property keys, and malformed syntax raise
/// ParseError with the exact file and line; a second circuit declaration
/// raises TopologyError.
RawCircuit read_raw(const std::string& master_path);

/// Resolve a raw circuit into a linked NetworkModel (references, matrices,
/// units, phase consistency) with voltage bases assigned from the source.
NetworkModel link(const RawCircuit& raw);

/// read_raw + link.
NetworkModel parse_circuit(const std::string& master_path);

/// Serialize a model into `out_dir` (master.dss plus redirected section
/// files). Returns the paths written. On any failure the files written so
/// far are removed and IoError is thrown. Numeric fields use 12 significant
/// digits, so parse_circuit(write_circuit(m)) reproduces m to 1e-12 relative.
std::vector<std::string> write_circuit(const NetworkModel& model, const std::string& out_dir);

}  // namespace mvlv::dss
