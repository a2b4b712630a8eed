#pragma once

#include "imdpm/expr.hpp"
#include "imdpm/model.hpp"
#include "imdpm/world_state.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imdpm {

enum class ActionCategory { legitimate, malicious };
enum class Observability { visible, invisible };

std::string_view to_string(ActionCategory c);
std::string_view to_string(Observability o);

// One technical event an action emits. Field values are literals or
// "$param" references; a therapy_modified template always forwards the
// instance's therapy changes.
struct EventTemplate
{
    TechnicalKind kind = TechnicalKind::log_read;
    std::map<std::string, std::string> fields;
};

// Parameter values used when an action is hypothesized rather than read off
// the evidence. A value starting with '=' is an expression evaluated in the
// current state ("=adversary.session"). Therapy changes list new values only.
struct ParamDefaults
{
    std::map<std::string, std::string> params;
    std::map<std::string, double> changes;
};

struct ActionDef
{
    std::string id;
    std::string name;
    ActionCategory category = ActionCategory::legitimate;
    Observability observability = Observability::invisible;
    expr::Expression guard;
    std::vector<expr::Statement> effects;
    std::vector<std::string> writes; // declared write-set (field paths or prefixes)
    std::vector<EventTemplate> emits;
    std::vector<std::string> parameters;
    std::vector<ParamDefaults> defaults;
    int battery_cost = 0;

    [[nodiscard]] bool visible() const { return observability == Observability::visible; }
    [[nodiscard]] bool malicious() const { return category == ActionCategory::malicious; }
    [[nodiscard]] bool writes_field(std::string_view path) const;
};

// An action with its parameters bound.
struct ActionInstance
{
    std::string action_id;
    expr::Bindings bindings;

    // Same action with the same parameters; timestamps are not compared.
    [[nodiscard]] bool same_action(const ActionInstance& other) const;
    // "open_session(session_id=S-1, user_id=dr)"
    [[nodiscard]] std::string label() const;
};

// Orders by action id, then parameters, then changes; never by time.
bool instance_less(const ActionInstance& a, const ActionInstance& b);

struct ApplyResult
{
    WorldState state;
    std::vector<TechnicalEvent> emitted;
};

class ActionLibrary
{
public:
    ActionLibrary() = default;

    // Throws ParseError on malformed JSON or expressions and
    // ValidationError on inconsistent definitions.
    static ActionLibrary parse(std::string_view text);
    static ActionLibrary from_json(const nlohmann::json& doc);

    [[nodiscard]] const std::vector<ActionDef>& actions() const { return _actions; }
    [[nodiscard]] const ActionDef& at(std::string_view id) const;
    [[nodiscard]] const ActionDef* find(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const { return find(id) != nullptr; }
    [[nodiscard]] std::size_t size() const { return _actions.size(); }

    // Insecure when any configured invariant-violation expression holds.
    [[nodiscard]] bool is_secure(const WorldState& s) const;
    [[nodiscard]] const std::vector<expr::Expression>& insecure_when() const { return _insecure_when; }

    // Subset with the given ids, keeping the security invariants.
    [[nodiscard]] ActionLibrary restricted_to(const std::vector<std::string>& ids) const;

    [[nodiscard]] const std::string& source_text() const { return _source; }

private:
    std::vector<ActionDef> _actions; // sorted by id
    std::vector<expr::Expression> _insecure_when;
    std::string _source;
};

// The shipped catalogue of attacks and legitimate programmer actions.
const ActionLibrary& builtin_actions();
std::string_view builtin_actions_text();

bool enabled(const ActionDef& a, const WorldState& s, const expr::Bindings& bindings = {});

// Throws GuardError when the guard does not hold. Invisible actions emit
// nothing.
ApplyResult apply(const ActionDef& a, const WorldState& s, const expr::Bindings& bindings = {});

// Events a visible action emits under the given bindings; depends on the
// bindings only.
std::vector<TechnicalEvent> emit(const ActionDef& a, const expr::Bindings& bindings);

// Instances built from the action's default parameter sets in state `s`.
std::vector<ActionInstance> hypothesize(const ActionDef& a, const WorldState& s);

// Binds a visible action's parameters from the next evidence events. Returns
// nullopt when the templates do not match. With `strict_payload`, therapy
// change old values must equal the current state.
std::optional<expr::Bindings> bind_from_evidence(const ActionDef& a, std::span<const TechnicalEvent> next,
                                                 const WorldState& s, bool strict_payload);

// Exhaustive forward application of hypothesized instances from `initial`,
// up to `max_depth` actions. States carry their security classification.
struct AttackGraph
{
    struct Node
    {
        WorldState state;
        bool secure = true;
        std::size_t depth = 0;
    };
    struct Edge
    {
        std::size_t from = 0;
        std::size_t to = 0;
        ActionInstance action;
    };

    std::vector<Node> nodes; // nodes[0] is the initial state
    std::vector<Edge> edges;
};

AttackGraph explore_attack_graph(const ActionLibrary& lib, const WorldState& initial, std::size_t max_depth);

} // namespace imdpm
