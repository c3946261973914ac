#pragma once

// Single-tape Turing machines over a base-b alphabet and their N^3 configuration
// coding (w1, w2, q):
//   w1  tape strictly left of the head, nearest cell in the lowest base-b digit
//   w2  tape from the head rightward, head symbol = w2 mod b
//   q   state in 1..m, m being the unique halting state
// Blank is symbol 0, so the all-blank tape encodes as w1 = w2 = 0.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace basinforge::tm {

using BigInt = boost::multiprecision::cpp_int;

enum class Move : std::uint8_t { Left, Right, Stay };

struct Rule {
    int write = 0;
    Move move = Move::Stay;
    int next = 1;
};

class InvalidState : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised for malformed machine descriptions. `line` is 1-based when the
/// offending item could be located in the source text, 0 otherwise.
class MachineFormatError : public std::runtime_error {
public:
    MachineFormatError(const std::string& what, int line = 0);
    int line() const { return line_; }

private:
    int line_;
};

struct EncodedConfig {
    BigInt w1;
    BigInt w2;
    int q = 1;

    friend bool operator==(const EncodedConfig&, const EncodedConfig&) = default;
};

struct HaltReport {
    bool halted = false;      // reached state m within budget
    bool clean = false;       // halted with the blank tape, i.e. final == (0,0,m)
    std::uint64_t steps_used = 0;
    EncodedConfig final;

    /// True iff the run ended exactly in the halting configuration (0,0,m).
    bool reached_halting_config() const { return halted && clean; }
};

class TuringMachine {
public:
    /// `rules` is indexed by (q-1)*b + a for q in 1..m-1 and a in 0..b-1.
    TuringMachine(int num_states, int base, std::vector<Rule> rules);

    int num_states() const { return m_; }
    int base() const { return b_; }
    int halting_state() const { return m_; }

    const Rule& rule(int q, int a) const;

    /// Parses the JSON machine description {"m","b","rules":[{q,a,write,move,next}]}.
    static TuringMachine from_json(const std::string& text);
    static TuringMachine from_file(const std::string& path);
    std::string to_json() const;

private:
    int m_;
    int b_;
    std::vector<Rule> rules_;
};

EncodedConfig encode_input(const TuringMachine& machine, const BigInt& w);

EncodedConfig halting_config(const TuringMachine& machine);

/// One transition of the machine on its configuration coding. The halting
/// configuration and every other q = m configuration are fixed points.
EncodedConfig step(const TuringMachine& machine, const EncodedConfig& config);

/// Iterates `step` from encode_input(machine, w) until state m or budget exhaustion.
HaltReport run(const TuringMachine& machine, const BigInt& w, std::uint64_t max_steps);

/// Explicit tape window: cells[i] is the symbol at head offset (i - head).
struct TapeWindow {
    std::vector<int> cells;
    std::size_t head = 0;
    int q = 1;
};

TapeWindow decode(const TuringMachine& machine, const EncodedConfig& config);
EncodedConfig encode(const TuringMachine& machine, const TapeWindow& window);

/// Every configuration visited from encode_input(w), at most `max_steps` steps,
/// including the initial one.
std::vector<EncodedConfig> reachable(const TuringMachine& machine, const BigInt& w,
                                     std::uint64_t max_steps);

// Machines used throughout the tests and demos.
TuringMachine make_eraser();            // b=10, m=2: erases nonzero digits moving right
TuringMachine make_looper();            // b=2,  m=2: erases and moves right forever
TuringMachine make_binary_incrementer(); // b=2, m=4: adds one, then wipes the carry run

}  // namespace basinforge::tm
