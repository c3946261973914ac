#include "basinforge/tm_core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace basinforge::tm {

namespace {

using nlohmann::json;

/// Line numbers (1-based) of each object opening brace inside the top-level
/// "rules" array, so validation errors can point at the offending rule.
std::vector<int> rule_lines(const std::string& text) {
    std::vector<int> lines;
    const auto key = text.find("\"rules\"");
    if (key == std::string::npos) return lines;
    const auto open = text.find('[', key);
    if (open == std::string::npos) return lines;

    int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + open, '\n'));
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char ch = text[i];
        if (ch == '\n') ++line;
        if (in_string) {
            if (ch == '\\') ++i;
            else if (ch == '"') in_string = false;
            continue;
        }
        if (ch == '"') in_string = true;
        else if (ch == '[' || ch == '{') {
            if (ch == '{' && depth == 1) lines.push_back(line);
            ++depth;
        } else if (ch == ']' || ch == '}') {
            if (--depth == 0) break;
        }
    }
    return lines;
}

Move parse_move(const std::string& s, int line) {
    if (s == "L") return Move::Left;
    if (s == "R") return Move::Right;
    if (s == "S") return Move::Stay;
    throw MachineFormatError("move must be one of L, R, S (got \"" + s + "\")", line);
}

const char* move_name(Move m) {
    switch (m) {
        case Move::Left: return "L";
        case Move::Right: return "R";
        case Move::Stay: return "S";
    }
    return "S";
}

int small_mod(const BigInt& w, int b) {
    return static_cast<int>(static_cast<unsigned>(w % b));
}

}  // namespace

MachineFormatError::MachineFormatError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

TuringMachine::TuringMachine(int num_states, int base, std::vector<Rule> rules)
    : m_(num_states), b_(base), rules_(std::move(rules)) {
    if (m_ < 2) throw MachineFormatError("machine needs at least 2 states (m >= 2)");
    if (b_ < 2) throw MachineFormatError("base must be at least 2");
    if (rules_.size() != static_cast<std::size_t>((m_ - 1) * b_))
        throw MachineFormatError("rule table must have (m-1)*b entries");
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const Rule& r = rules_[i];
        if (r.write < 0 || r.write >= b_ || r.next < 1 || r.next > m_) {
            std::ostringstream os;
            os << "rule (q=" << i / b_ + 1 << ", a=" << i % b_ << ") out of range";
            throw MachineFormatError(os.str());
        }
    }
}

const Rule& TuringMachine::rule(int q, int a) const {
    if (q < 1 || q >= m_) throw InvalidState("no rule for state " + std::to_string(q));
    return rules_[static_cast<std::size_t>((q - 1) * b_ + a)];
}

TuringMachine TuringMachine::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MachineFormatError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("m") || !doc.contains("b") || !doc.contains("rules"))
        throw MachineFormatError("machine description needs fields m, b, rules");

    const int m = doc.at("m").get<int>();
    const int b = doc.at("b").get<int>();
    if (m < 2) throw MachineFormatError("m must be >= 2");
    if (b < 2) throw MachineFormatError("b must be >= 2");

    const auto lines = rule_lines(text);
    std::vector<Rule> rules(static_cast<std::size_t>((m - 1) * b));
    std::vector<bool> seen(rules.size(), false);

    const auto& arr = doc.at("rules");
    if (!arr.is_array()) throw MachineFormatError("rules must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const int line = i < lines.size() ? lines[i] : 0;
        const auto& item = arr[i];
        for (const char* k : {"q", "a", "write", "move", "next"})
            if (!item.contains(k))
                throw MachineFormatError(std::string("rule is missing field \"") + k + "\"", line);
        const int q = item.at("q").get<int>();
        const int a = item.at("a").get<int>();
        Rule r{item.at("write").get<int>(), parse_move(item.at("move").get<std::string>(), line),
               item.at("next").get<int>()};
        if (q < 1 || q >= m)
            throw MachineFormatError("rule state q=" + std::to_string(q) + " outside 1..m-1", line);
        if (a < 0 || a >= b)
            throw MachineFormatError("rule symbol a=" + std::to_string(a) + " outside 0..b-1", line);
        if (r.write < 0 || r.write >= b)
            throw MachineFormatError("write symbol " + std::to_string(r.write) + " outside 0..b-1", line);
        if (r.next < 1 || r.next > m)
            throw MachineFormatError("next state " + std::to_string(r.next) + " outside 1..m", line);
        const auto idx = static_cast<std::size_t>((q - 1) * b + a);
        if (seen[idx])
            throw MachineFormatError("duplicate rule for (q=" + std::to_string(q) +
                                         ", a=" + std::to_string(a) + ")", line);
        seen[idx] = true;
        rules[idx] = r;
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw MachineFormatError("rule table is not total: missing (q=" +
                                     std::to_string(i / b + 1) + ", a=" + std::to_string(i % b) + ")");
    return TuringMachine(m, b, std::move(rules));
}

TuringMachine TuringMachine::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MachineFormatError("cannot open machine file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string TuringMachine::to_json() const {
    json doc{{"m", m_}, {"b", b_}, {"rules", json::array()}};
    for (int q = 1; q < m_; ++q)
        for (int a = 0; a < b_; ++a) {
            const Rule& r = rule(q, a);
            doc["rules"].push_back(
                {{"q", q}, {"a", a}, {"write", r.write}, {"move", move_name(r.move)}, {"next", r.next}});
        }
    return doc.dump(2);
}

EncodedConfig encode_input(const TuringMachine&, const BigInt& w) { return {0, w, 1}; }

EncodedConfig halting_config(const TuringMachine& machine) { return {0, 0, machine.halting_state()}; }

EncodedConfig step(const TuringMachine& machine, const EncodedConfig& c) {
    if (c.q < 1 || c.q > machine.num_states())
        throw InvalidState("state " + std::to_string(c.q) + " outside 1.." +
                           std::to_string(machine.num_states()));
    if (c.w1 < 0 || c.w2 < 0) throw InvalidState("tape halves must be non-negative");
    if (c.q == machine.halting_state()) return c;

    const int b = machine.base();
    const int a = small_mod(c.w2, b);
    const Rule& r = machine.rule(c.q, a);

    EncodedConfig out;
    out.q = r.next;
    switch (r.move) {
        case Move::Stay:
            out.w1 = c.w1;
            out.w2 = c.w2 - a + r.write;
            break;
        case Move::Right:
            out.w1 = c.w1 * b + r.write;
            out.w2 = (c.w2 - a) / b;
            break;
        case Move::Left:
            out.w2 = (c.w2 - a + r.write) * b + small_mod(c.w1, b);
            out.w1 = c.w1 / b;
            break;
    }
    return out;
}

HaltReport run(const TuringMachine& machine, const BigInt& w, std::uint64_t max_steps) {
    HaltReport report;
    EncodedConfig c = encode_input(machine, w);
    std::uint64_t n = 0;
    while (c.q != machine.halting_state() && n < max_steps) {
        c = step(machine, c);
        ++n;
    }
    report.halted = c.q == machine.halting_state();
    report.clean = report.halted && c == halting_config(machine);
    report.steps_used = n;
    report.final = std::move(c);
    return report;
}

TapeWindow decode(const TuringMachine& machine, const EncodedConfig& c) {
    const int b = machine.base();
    std::vector<int> left;
    for (BigInt w = c.w1; w > 0; w /= b) left.push_back(small_mod(w, b));
    std::vector<int> right;
    for (BigInt w = c.w2; w > 0; w /= b) right.push_back(small_mod(w, b));
    if (right.empty()) right.push_back(0);

    TapeWindow win;
    win.q = c.q;
    win.head = left.size();
    win.cells.assign(left.rbegin(), left.rend());
    win.cells.insert(win.cells.end(), right.begin(), right.end());
    return win;
}

EncodedConfig encode(const TuringMachine& machine, const TapeWindow& win) {
    const int b = machine.base();
    EncodedConfig c;
    c.q = win.q;
    for (std::size_t i = 0; i < win.head; ++i) c.w1 = c.w1 * b + win.cells[i];
    for (std::size_t i = win.cells.size(); i-- > win.head;) c.w2 = c.w2 * b + win.cells[i];
    return c;
}

std::vector<EncodedConfig> reachable(const TuringMachine& machine, const BigInt& w,
                                     std::uint64_t max_steps) {
    std::vector<EncodedConfig> out{encode_input(machine, w)};
    for (std::uint64_t n = 0; n < max_steps && out.back().q != machine.halting_state(); ++n)
        out.push_back(step(machine, out.back()));
    return out;
}

TuringMachine make_eraser() {
    std::vector<Rule> rules(10);
    rules[0] = {0, Move::Stay, 2};
    for (int a = 1; a < 10; ++a) rules[a] = {0, Move::Right, 1};
    return TuringMachine(2, 10, std::move(rules));
}

TuringMachine make_looper() {
    return TuringMachine(2, 2, {{0, Move::Right, 1}, {0, Move::Right, 1}});
}

TuringMachine make_binary_incrementer() {
    // q1 propagates the carry, q2 clears the cell that absorbed it, q3 clears
    // the following run of ones and halts at the first blank.
    return TuringMachine(4, 2,
                         {
                             {1, Move::Stay, 2},   // q1, 0
                             {0, Move::Right, 1},  // q1, 1
                             {0, Move::Stay, 4},   // q2, 0
                             {0, Move::Right, 3},  // q2, 1
                             {0, Move::Stay, 4},   // q3, 0
                             {0, Move::Right, 3},  // q3, 1
                         });
}

}  // namespace basinforge::tm
