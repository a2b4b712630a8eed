#pragma once

#include "imdpm/model.hpp"
#include "imdpm/world_state.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Guard/effect language used by action library files.
//
//   guard:   adversary.captured_traffic && !channel_jammed
//            session_open($session_id) && adversary.session == $session_id
//   effects: adversary.knows_credentials = true
//            imd.shock_budget_used = imd.shock_budget_used + 1
//            open_session($user_id, $session_id)
//
// Operands are state field paths, literals (true, 12, 3.5, "text"), action
// parameters ($name, always text) and calls: session_open(id),
// session_count(), int(x), num(x), min(a, b), max(a, b), at_ms().
// Statements are assignments or one of open_session(user, id),
// close_session(id), apply_therapy_changes().
namespace imdpm::expr {

using Value = FieldValue;

// Values an action instance contributes to guard and effect evaluation.
struct Bindings
{
    std::map<std::string, std::string> params;
    TherapyChanges changes;
    std::optional<Timestamp> at; // absent for hypothesized, unobserved actions

    bool operator==(const Bindings&) const = default;
};

struct Node;

class Expression
{
public:
    // Throws ParseError (line 1, column of the offending token).
    static Expression parse(std::string_view text);

    [[nodiscard]] Value eval(const WorldState& state, const Bindings& bindings) const;
    // Evaluates and requires a boolean result.
    [[nodiscard]] bool test(const WorldState& state, const Bindings& bindings) const;
    [[nodiscard]] const std::string& source() const { return _source; }
    // Every "$name" referenced.
    [[nodiscard]] std::vector<std::string> parameters() const;

private:
    friend class Statement;

    std::shared_ptr<const Node> _root;
    std::string _source;
};

class Statement
{
public:
    static Statement parse(std::string_view text);

    void execute(WorldState& state, const Bindings& bindings) const;
    [[nodiscard]] const std::string& source() const { return _source; }
    // Field path assigned, or "imd.sessions"/"imd.therapy" for the built-in
    // procedures.
    [[nodiscard]] const std::string& target() const { return _target; }

private:
    enum class Kind { assign, open_session, close_session, apply_therapy_changes };

    Kind _kind = Kind::assign;
    std::string _target;
    std::vector<Expression> _args;
    std::string _source;
};

} // namespace imdpm::expr
