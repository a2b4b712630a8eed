#include "imdpm/attack_library.hpp"

#include "imdpm/errors.hpp"
#include "imdpm/evidence.hpp"
#include "resources.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace imdpm {

using nlohmann::json;

std::string_view to_string(ActionCategory c)
{
    return c == ActionCategory::malicious ? "malicious" : "legitimate";
}

std::string_view to_string(Observability o)
{
    return o == Observability::visible ? "visible" : "invisible";
}

bool ActionDef::writes_field(std::string_view path) const
{
    return std::any_of(writes.begin(), writes.end(), [&](const std::string& w) { return path_covered_by(path, w); });
}

bool ActionInstance::same_action(const ActionInstance& other) const
{
    return action_id == other.action_id && bindings.params == other.bindings.params &&
           bindings.changes == other.bindings.changes;
}

std::string ActionInstance::label() const
{
    std::ostringstream out;
    out << action_id;
    if (bindings.params.empty() && bindings.changes.empty())
        return out.str();
    out << '(';
    bool first = true;
    for (const auto& [name, value] : bindings.params) {
        out << (first ? "" : ", ") << name << '=' << value;
        first = false;
    }
    for (const auto& [name, change] : bindings.changes) {
        out << (first ? "" : ", ") << name << ':' << change.old_value << "->" << change.new_value;
        first = false;
    }
    out << ')';
    return out.str();
}

bool instance_less(const ActionInstance& a, const ActionInstance& b)
{
    if (a.action_id != b.action_id)
        return a.action_id < b.action_id;
    if (a.bindings.params != b.bindings.params)
        return a.bindings.params < b.bindings.params;
    auto flat = [](const TherapyChanges& c) {
        std::vector<std::tuple<std::string, double, double>> out;
        for (const auto& [name, change] : c)
            out.emplace_back(name, change.old_value, change.new_value);
        return out;
    };
    return flat(a.bindings.changes) < flat(b.bindings.changes);
}

namespace {

bool is_param_ref(const std::string& value)
{
    return value.size() > 1 && value.front() == '$';
}

FieldType schema_type(TechnicalKind kind, std::string_view field)
{
    for (const auto& spec : payload_schema(kind))
        if (spec.name == field)
            return spec.type;
    return FieldType::text;
}

ActionDef parse_action(const json& j)
{
    ActionDef a;
    a.id = j.at("id").get<std::string>();
    if (a.id.empty())
        throw ValidationError("action with empty id");
    a.name = j.value("name", a.id);

    auto category = j.value("category", std::string("legitimate"));
    if (category == "malicious")
        a.category = ActionCategory::malicious;
    else if (category != "legitimate")
        throw ValidationError("action " + a.id + ": unknown category '" + category + "'");

    auto observability = j.value("observability", std::string("invisible"));
    if (observability == "visible")
        a.observability = Observability::visible;
    else if (observability != "invisible")
        throw ValidationError("action " + a.id + ": unknown observability '" + observability + "'");

    a.guard = expr::Expression::parse(j.value("guard", std::string("true")));
    for (const auto& text : j.value("effects", json::array()))
        a.effects.push_back(expr::Statement::parse(text.get<std::string>()));
    a.writes = j.value("writes", std::vector<std::string>{});
    a.parameters = j.value("parameters", std::vector<std::string>{});
    a.battery_cost = j.value("battery_cost", 0);
    if (a.battery_cost < 0)
        throw ValidationError("action " + a.id + ": negative battery_cost");
    if (a.battery_cost > 0 && !a.writes_field("imd.battery"))
        a.writes.push_back("imd.battery");

    for (const auto& t : j.value("emits", json::array())) {
        EventTemplate tpl;
        tpl.kind = parse_technical_kind(t.at("kind").get<std::string>());
        for (const auto& [name, value] : t.items()) {
            if (name == "kind")
                continue;
            tpl.fields[name] = value.is_string() ? value.get<std::string>() : value.dump();
        }
        a.emits.push_back(std::move(tpl));
    }

    for (const auto& d : j.value("defaults", json::array())) {
        ParamDefaults defaults;
        if (d.contains("params"))
            defaults.params = d.at("params").get<std::map<std::string, std::string>>();
        if (d.contains("changes"))
            defaults.changes = d.at("changes").get<std::map<std::string, double>>();
        a.defaults.push_back(std::move(defaults));
    }
    return a;
}

void validate_action(const ActionDef& a)
{
    auto fail = [&](const std::string& what) { throw ValidationError("action " + a.id + ": " + what); };

    if (!a.visible() && !a.emits.empty())
        fail("invisible actions cannot emit events");
    if (a.visible() && a.emits.empty())
        fail("visible actions must emit at least one event");

    std::set<std::string> declared(a.parameters.begin(), a.parameters.end());
    std::set<std::string> in_templates;
    for (const auto& tpl : a.emits) {
        std::set<std::string> expected;
        for (const auto& spec : payload_schema(tpl.kind))
            expected.insert(std::string(spec.name));
        std::set<std::string> given;
        for (const auto& [name, value] : tpl.fields) {
            given.insert(name);
            if (is_param_ref(value)) {
                in_templates.insert(value.substr(1));
                if (!declared.contains(value.substr(1)))
                    fail("template references undeclared parameter " + value);
            } else {
                canonical_field_text(schema_type(tpl.kind, name), value);
            }
        }
        if (given != expected)
            fail("template for " + std::string(to_string(tpl.kind)) + " must give exactly the payload fields");
    }
    for (const auto& e : a.effects)
        if (!a.writes_field(e.target()))
            fail("effect \"" + e.source() + "\" writes outside the declared write-set");

    auto check_params = [&](const std::vector<std::string>& used, const std::string& where) {
        for (const auto& p : used)
            if (!declared.contains(p))
                fail(where + " references undeclared parameter $" + p);
    };
    check_params(a.guard.parameters(), "guard");

    if (a.visible()) {
        for (const auto& p : a.parameters)
            if (!in_templates.contains(p))
                fail("visible action parameter $" + p + " is not bound by any emitted field");
    }
    if (!a.parameters.empty()) {
        for (const auto& d : a.defaults)
            for (const auto& p : a.parameters)
                if (!d.params.contains(p))
                    fail("default parameter set lacks $" + p);
    }
    for (const auto& d : a.defaults)
        for (const auto& [name, value] : d.changes)
            if (!is_known_field("imd.therapy." + name))
                fail("default change to unknown therapy parameter " + name);
}

std::string render_text(const FieldValue& v)
{
    if (auto s = std::get_if<std::string>(&v))
        return *s;
    return render(v);
}

} // namespace

ActionLibrary ActionLibrary::from_json(const json& doc)
{
    ActionLibrary lib;
    try {
        for (const auto& item : doc.at("actions"))
            lib._actions.push_back(parse_action(item));
        for (const auto& text : doc.value("insecure_when", json::array()))
            lib._insecure_when.push_back(expr::Expression::parse(text.get<std::string>()));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("action library: ") + e.what());
    }

    std::sort(lib._actions.begin(), lib._actions.end(),
              [](const ActionDef& a, const ActionDef& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < lib._actions.size(); ++i) {
        if (i > 0 && lib._actions[i].id == lib._actions[i - 1].id)
            throw ValidationError("duplicate action id '" + lib._actions[i].id + "'");
        validate_action(lib._actions[i]);
    }
    lib._source = doc.dump();
    return lib;
}

ActionLibrary ActionLibrary::parse(std::string_view text)
{
    auto lib = from_json(parse_json_document(text, "action library"));
    lib._source = std::string(text);
    return lib;
}

const ActionDef* ActionLibrary::find(std::string_view id) const
{
    auto it = std::lower_bound(_actions.begin(), _actions.end(), id,
                               [](const ActionDef& a, std::string_view key) { return a.id < key; });
    return it != _actions.end() && it->id == id ? &*it : nullptr;
}

const ActionDef& ActionLibrary::at(std::string_view id) const
{
    if (const auto* a = find(id))
        return *a;
    throw ValidationError("unknown action '" + std::string(id) + "'");
}

bool ActionLibrary::is_secure(const WorldState& s) const
{
    return std::none_of(_insecure_when.begin(), _insecure_when.end(),
                        [&](const expr::Expression& e) { return e.test(s, {}); });
}

ActionLibrary ActionLibrary::restricted_to(const std::vector<std::string>& ids) const
{
    ActionLibrary lib;
    lib._insecure_when = _insecure_when;
    for (const auto& a : _actions)
        if (std::find(ids.begin(), ids.end(), a.id) != ids.end())
            lib._actions.push_back(a);
    lib._source = _source;
    for (const auto& a : lib._actions)
        lib._source += "|" + a.id;
    return lib;
}

const ActionLibrary& builtin_actions()
{
    static const ActionLibrary lib = ActionLibrary::parse(builtin_actions_text());
    return lib;
}

std::string_view builtin_actions_text()
{
    return resources::actions_json;
}

bool enabled(const ActionDef& a, const WorldState& s, const expr::Bindings& bindings)
{
    return a.guard.test(s, bindings);
}

std::vector<TechnicalEvent> emit(const ActionDef& a, const expr::Bindings& bindings)
{
    std::vector<TechnicalEvent> out;
    for (const auto& tpl : a.emits) {
        TechnicalEvent ev;
        ev.at = bindings.at.value_or(Timestamp{});
        ev.kind = tpl.kind;
        for (const auto& [name, value] : tpl.fields) {
            std::string text = value;
            if (is_param_ref(value)) {
                auto it = bindings.params.find(value.substr(1));
                if (it == bindings.params.end())
                    throw ValidationError("action " + a.id + ": unbound parameter " + value);
                text = it->second;
            }
            ev.fields[name] = canonical_field_text(schema_type(tpl.kind, name), text);
        }
        if (tpl.kind == TechnicalKind::therapy_modified)
            ev.changes = bindings.changes;
        out.push_back(std::move(ev));
    }
    return out;
}

ApplyResult apply(const ActionDef& a, const WorldState& s, const expr::Bindings& bindings)
{
    if (!enabled(a, s, bindings))
        throw GuardError("action " + a.id + " is not enabled: guard \"" + a.guard.source() + "\" is false");
    ApplyResult result{s, {}};
    for (const auto& e : a.effects)
        e.execute(result.state, bindings);
    if (a.battery_cost > 0)
        result.state.imd.battery = std::max(0, result.state.imd.battery - a.battery_cost);
    result.state.validate();
    if (a.visible())
        result.emitted = emit(a, bindings);
    return result;
}

std::vector<ActionInstance> hypothesize(const ActionDef& a, const WorldState& s)
{
    std::vector<ActionInstance> out;
    if (a.defaults.empty()) {
        if (a.parameters.empty() && std::none_of(a.emits.begin(), a.emits.end(), [](const EventTemplate& t) {
                return t.kind == TechnicalKind::therapy_modified;
            }))
            out.push_back({a.id, {}});
        return out;
    }

    std::map<std::string, FieldType> numeric;
    for (const auto& tpl : a.emits)
        for (const auto& [name, value] : tpl.fields)
            if (is_param_ref(value))
                numeric[value.substr(1)] = schema_type(tpl.kind, name);

    for (const auto& d : a.defaults) {
        ActionInstance inst{a.id, {}};
        for (const auto& [name, value] : d.params) {
            std::string text = value;
            if (!value.empty() && value.front() == '=')
                text = render_text(expr::Expression::parse(value.substr(1)).eval(s, {}));
            auto it = numeric.find(name);
            if (it != numeric.end() && it->second != FieldType::text) {
                try {
                    text = canonical_field_text(it->second, text);
                } catch (const ValidationError&) {
                    continue;
                }
            }
            inst.bindings.params[name] = text;
        }
        if (inst.bindings.params.size() != d.params.size())
            continue;
        for (const auto& [name, new_value] : d.changes) {
            auto old = get_field(s, "imd.therapy." + name);
            double old_value = std::holds_alternative<double>(old) ? std::get<double>(old)
                                                                    : static_cast<double>(std::get<std::int64_t>(old));
            inst.bindings.changes[name] = ParamChange{old_value, new_value};
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::optional<expr::Bindings> bind_from_evidence(const ActionDef& a, std::span<const TechnicalEvent> next,
                                                 const WorldState& s, bool strict_payload)
{
    if (!a.visible() || next.size() < a.emits.size())
        return std::nullopt;

    expr::Bindings b;
    b.at = next.front().at;
    bool have_changes = false;
    for (std::size_t i = 0; i < a.emits.size(); ++i) {
        const auto& tpl = a.emits[i];
        const auto& ev = next[i];
        if (ev.kind != tpl.kind)
            return std::nullopt;
        for (const auto& [name, value] : tpl.fields) {
            const auto& actual = ev.field(name);
            if (is_param_ref(value)) {
                auto [it, inserted] = b.params.emplace(value.substr(1), actual);
                if (!inserted && it->second != actual)
                    return std::nullopt;
            } else if (canonical_field_text(schema_type(tpl.kind, name), value) != actual) {
                return std::nullopt;
            }
        }
        if (tpl.kind == TechnicalKind::therapy_modified) {
            if (have_changes && b.changes != ev.changes)
                return std::nullopt;
            b.changes = ev.changes;
            have_changes = true;
        }
    }

    for (const auto& [name, change] : b.changes) {
        std::string path = "imd.therapy." + name;
        if (!is_known_field(path))
            return std::nullopt;
        if (strict_payload) {
            auto current = get_field(s, path);
            double value = std::holds_alternative<double>(current)
                               ? std::get<double>(current)
                               : static_cast<double>(std::get<std::int64_t>(current));
            if (value != change.old_value)
                return std::nullopt;
        }
    }
    return b;
}

AttackGraph explore_attack_graph(const ActionLibrary& lib, const WorldState& initial, std::size_t max_depth)
{
    AttackGraph g;
    std::unordered_map<std::string, std::size_t> index;
    g.nodes.push_back({initial, lib.is_secure(initial), 0});
    index.emplace(initial.key(), 0);

    std::set<std::tuple<std::size_t, std::size_t, std::string>> seen_edges;
    std::deque<std::size_t> queue{0};
    while (!queue.empty()) {
        std::size_t current = queue.front();
        queue.pop_front();
        if (g.nodes[current].depth >= max_depth)
            continue;
        for (const auto& a : lib.actions()) {
            WorldState from = g.nodes[current].state;
            for (auto& inst : hypothesize(a, from)) {
                if (!enabled(a, from, inst.bindings))
                    continue;
                auto next = apply(a, from, inst.bindings).state;
                auto key = next.key();
                auto [it, inserted] = index.emplace(key, g.nodes.size());
                if (inserted) {
                    g.nodes.push_back({next, lib.is_secure(next), g.nodes[current].depth + 1});
                    queue.push_back(it->second);
                }
                if (seen_edges.emplace(current, it->second, inst.label()).second)
                    g.edges.push_back({current, it->second, std::move(inst)});
            }
        }
    }
    return g;
}

} // namespace imdpm
