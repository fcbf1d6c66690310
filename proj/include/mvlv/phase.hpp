#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvlv/errors.hpp"

namespace mvlv {

/// Conductor phase of a three-phase system.
enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline char phase_letter(Phase p) { return "ABC"[static_cast<int>(p)]; }

/// Phase following `p` in ABC rotation (used for delta winding pairing).
inline Phase next_phase(Phase p) {
    return static_cast<Phase>((static_cast<int>(p) + 1) % 3);
}

/// Ordered subset of {A,B,C}. Iteration and matrix row ordering always
/// follow A < B < C, so two equal sets imply identical orderings.
class PhaseSet {
public:
    PhaseSet() = default;

    static PhaseSet all3() { return PhaseSet(0b111); }
    static PhaseSet single(Phase p) { return PhaseSet(static_cast<std::uint8_t>(1u << static_cast<int>(p))); }

    static PhaseSet from_list(const std::vector<Phase>& phases) {
        PhaseSet s;
        for (Phase p : phases) {
            std::uint8_t bit = static_cast<std::uint8_t>(1u << static_cast<int>(p));
            if (s.mask_ & bit) throw InvalidInput("duplicate phase in phase list");
            s.mask_ |= bit;
        }
        return s;
    }

    bool contains(Phase p) const { return mask_ & (1u << static_cast<int>(p)); }
    bool empty() const { return mask_ == 0; }
    int size() const { return (mask_ & 1) + ((mask_ >> 1) & 1) + ((mask_ >> 2) & 1); }

    bool operator==(const PhaseSet&) const = default;

    bool is_subset_of(PhaseSet other) const { return (mask_ & ~other.mask_) == 0; }

    PhaseSet united(PhaseSet other) const { return PhaseSet(mask_ | other.mask_); }

    /// Phases in A,B,C order.
    std::vector<Phase> list() const {
        std::vector<Phase> out;
        for (int i = 0; i < 3; ++i)
            if (mask_ & (1u << i)) out.push_back(static_cast<Phase>(i));
        return out;
    }

    /// Row/column index of `p` within this set's canonical ordering, or -1.
    int index_of(Phase p) const {
        if (!contains(p)) return -1;
        int idx = 0;
        for (int i = 0; i < static_cast<int>(p); ++i)
            if (mask_ & (1u << i)) ++idx;
        return idx;
    }

    std::string to_string() const {
        std::string s;
        for (Phase p : list()) s += phase_letter(p);
        return s;
    }

    std::uint8_t mask() const { return mask_; }

private:
    explicit PhaseSet(std::uint8_t mask) : mask_(mask) {}
    std::uint8_t mask_ = 0;
};

}  // namespace mvlv
