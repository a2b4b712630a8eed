#include "oracles.hpp"

#include <algorithm>
#include <sstream>

namespace imdpm::testing {

namespace {

struct Line
{
    EventPattern pattern;
    std::optional<std::size_t> binding;
    std::optional<std::string> rule;
    int slot = 0;
};

std::string encode(const EventPattern& p, std::optional<std::size_t> binding, const std::optional<std::string>& rule,
                   int slot)
{
    std::ostringstream out;
    out << p.to_dsl() << " " << (binding ? std::to_string(*binding) : "-") << " " << rule.value_or("-") << " "
        << slot;
    return out.str();
}

bool event_fits(const EventPattern& p, const MedicalEvent& ev)
{
    switch (p.kind) {
    case EventPattern::Kind::heart_death: return ev.is_heart_death();
    case EventPattern::Kind::unobservable: return false;
    case EventPattern::Kind::arrhythmia: return ev.is_arrhythmia() && ev.arrhythmia == p.arrhythmia;
    case EventPattern::Kind::labeled_arrhythmia:
        return ev.is_arrhythmia() && ev.arrhythmia == p.arrhythmia && ev.label == p.label;
    }
    return false;
}

class MedicalOracle
{
public:
    MedicalOracle(const MedicalLog& log, const RuleSet& rules, const InferenceConfig& cfg)
        : _log(log), _rules(rules), _cfg(cfg)
    {
        for (std::size_t i = 0; i < log.events.size(); ++i) {
            if (log.events[i].is_arrhythmia())
                _arrhythmias.push_back(i);
            if (log.events[i].is_heart_death())
                _hd = i;
        }
    }

    std::multiset<Branch> run()
    {
        std::vector<Line> branch{{EventPattern::heart_death(), _hd, std::nullopt, 0}};
        search(branch, _hd, 0, 0);
        return _out;
    }

private:
    bool too_old(std::size_t i) const { return (_log.events[_hd].at - _log.events[i].at) > _cfg.max_age; }

    // Whether `chosen` is the evidence event immediately preceding `before`
    // for pattern `p` under the rule window.
    bool admissible(const EventPattern& p, std::size_t chosen, std::size_t before, Duration window) const
    {
        if (chosen >= before || !event_fits(p, _log.events[chosen]))
            return false;
        for (auto k : _arrhythmias) {
            if (k <= chosen || k >= before)
                continue;
            const auto& ev = _log.events[k];
            if (event_fits(p, ev) || !_cfg.skip_ok_events || ev.label != ResponseLabel::OK)
                return false;
        }
        if (_log.events[before].at - _log.events[chosen].at > window)
            return false;
        return !too_old(chosen);
    }

    void search(std::vector<Line>& branch, std::size_t anchor, int depth, int run)
    {
        bool extended = false;
        bool recent = std::any_of(_arrhythmias.begin(), _arrhythmias.end(),
                                  [&](std::size_t a) { return a < anchor && !too_old(a); });
        if (recent) {
            const Line node = branch.back();
            for (const auto& r : _rules.rules) {
                bool fires = node.binding ? event_fits(r.consequent, _log.events[*node.binding])
                                          : (r.consequent.kind == EventPattern::Kind::unobservable &&
                                             r.consequent.name == node.pattern.name);
                if (!fires)
                    continue;
                bool all_unobservable = std::none_of(r.premise.begin(), r.premise.end(),
                                                     [](const EventPattern& p) { return p.observable(); });
                int next_run = all_unobservable ? run + 1 : 0;
                if (next_run > _cfg.max_unobservable_chain)
                    continue;

                std::vector<Line> slots;
                for (int i = 1; i < r.m; ++i)
                    slots.push_back({r.consequent, std::nullopt, r.id, 0});
                for (int rep = 0; rep < r.n; ++rep)
                    for (auto it = r.premise.rbegin(); it != r.premise.rend(); ++it)
                        slots.push_back({*it, std::nullopt, r.id, 0});
                if (depth + static_cast<int>(slots.size()) > _cfg.max_depth)
                    continue;

                std::vector<std::size_t> to_bind;
                for (std::size_t i = 0; i < slots.size(); ++i) {
                    slots[i].slot = static_cast<int>(i);
                    bool consequent_copy = static_cast<int>(i) < r.m - 1;
                    if (consequent_copy ? node.binding.has_value() : slots[i].pattern.observable())
                        to_bind.push_back(i);
                }

                std::vector<std::size_t> tuple(to_bind.size(), 0);
                while (true) {
                    std::size_t before = anchor;
                    bool ok = true;
                    for (std::size_t k = 0; k < to_bind.size() && ok; ++k) {
                        auto chosen = _arrhythmias.empty() ? 0 : _arrhythmias[tuple[k]];
                        ok = !_arrhythmias.empty() &&
                             admissible(slots[to_bind[k]].pattern, chosen, before, r.window);
                        before = chosen;
                    }
                    if (ok) {
                        auto applied = slots;
                        for (std::size_t k = 0; k < to_bind.size(); ++k)
                            applied[to_bind[k]].binding = _arrhythmias[tuple[k]];
                        branch.insert(branch.end(), applied.begin(), applied.end());
                        search(branch, before, depth + static_cast<int>(slots.size()), next_run);
                        branch.resize(branch.size() - applied.size());
                        extended = true;
                    }
                    std::size_t k = 0;
                    while (k < tuple.size() && ++tuple[k] == _arrhythmias.size())
                        tuple[k++] = 0;
                    if (k == tuple.size())
                        break;
                }
            }
        }
        if (!extended) {
            Branch b;
            for (const auto& l : branch)
                b.push_back(encode(l.pattern, l.binding, l.rule, l.slot));
            _out.insert(std::move(b));
        }
    }

    const MedicalLog& _log;
    const RuleSet& _rules;
    const InferenceConfig& _cfg;
    std::vector<std::size_t> _arrhythmias;
    std::size_t _hd = 0;
    std::multiset<Branch> _out;
};

class TechnicalOracle
{
public:
    TechnicalOracle(const WorldState& initial, const std::vector<TechnicalEvent>& evidence, const ActionLibrary& lib,
                    const SearchBounds& bounds)
        : _evidence(evidence), _lib(lib), _bounds(bounds)
    {
        _states.push_back(initial);
        _consumed.push_back(0);
    }

    std::vector<Scenario> run()
    {
        extend();
        return _out;
    }

private:
    std::vector<expr::Bindings> visible_bindings(const ActionDef& def, std::size_t consumed) const
    {
        std::vector<expr::Bindings> out{expr::Bindings{}};
        for (const auto& p : def.parameters) {
            std::set<std::string> values;
            for (const auto& tpl : def.emits)
                for (const auto& [field, value] : tpl.fields)
                    if (value == "$" + p)
                        for (const auto& ev : _evidence)
                            if (ev.fields.contains(field))
                                values.insert(ev.fields.at(field));
            std::vector<expr::Bindings> next;
            for (const auto& b : out)
                for (const auto& v : values) {
                    auto copy = b;
                    copy.params[p] = v;
                    next.push_back(copy);
                }
            out = std::move(next);
        }
        bool therapy = std::any_of(def.emits.begin(), def.emits.end(),
                                   [](const EventTemplate& t) { return t.kind == TechnicalKind::therapy_modified; });
        if (therapy) {
            std::vector<expr::Bindings> next;
            for (const auto& b : out)
                for (const auto& ev : _evidence)
                    if (ev.kind == TechnicalKind::therapy_modified) {
                        auto copy = b;
                        copy.changes = ev.changes;
                        next.push_back(copy);
                    }
            out = std::move(next);
        }
        for (auto& b : out)
            if (consumed < _evidence.size())
                b.at = _evidence[consumed].at;
        return out;
    }

    void record()
    {
        if (_obs.size() != _evidence.size())
            return;
        for (std::size_t i = 0; i < _obs.size(); ++i)
            if (!event_matches(_obs[i], _evidence[i], _bounds.strict_payload))
                return;
        int run = 0;
        for (const auto& a : _actions) {
            run = _lib.at(a.action_id).visible() ? 0 : run + 1;
            if (run > _bounds.max_invisible_run)
                return;
        }
        std::set<std::string> seen;
        for (std::size_t i = 0; i < _states.size(); ++i)
            if (!seen.insert(_states[i].key() + "#" + std::to_string(_consumed[i])).second)
                return;
        _out.push_back(Scenario{_states, _actions});
    }

    void extend()
    {
        record();
        if (static_cast<int>(_actions.size()) >= _bounds.max_total_steps)
            return;
        for (const auto& def : _lib.actions()) {
            const WorldState s = _states.back();
            std::vector<expr::Bindings> options;
            if (def.visible())
                options = visible_bindings(def, _obs.size());
            else
                for (auto& inst : hypothesize(def, s))
                    options.push_back(inst.bindings);
            for (const auto& b : options) {
                if (!enabled(def, s, b))
                    continue;
                auto emitted = def.visible() ? emit(def, b) : std::vector<TechnicalEvent>{};
                if (_obs.size() + emitted.size() > _evidence.size())
                    continue;
                auto next = apply(def, s, b).state;
                _actions.push_back({def.id, b});
                _states.push_back(std::move(next));
                _consumed.push_back(_obs.size() + emitted.size());
                _obs.insert(_obs.end(), emitted.begin(), emitted.end());
                extend();
                _obs.resize(_obs.size() - emitted.size());
                _consumed.pop_back();
                _states.pop_back();
                _actions.pop_back();
            }
        }
    }

    const std::vector<TechnicalEvent>& _evidence;
    const ActionLibrary& _lib;
    const SearchBounds& _bounds;
    std::vector<WorldState> _states;
    std::vector<std::size_t> _consumed;
    std::vector<ActionInstance> _actions;
    std::vector<TechnicalEvent> _obs;
    std::vector<Scenario> _out;
};

} // namespace

std::multiset<Branch> brute_force_branches(const MedicalLog& log, const RuleSet& rules, const InferenceConfig& cfg)
{
    return MedicalOracle(log, rules, cfg).run();
}

std::multiset<Branch> branches_of(const std::vector<MedicalScenario>& scenarios)
{
    std::multiset<Branch> out;
    for (const auto& m : scenarios) {
        Branch b;
        for (auto it = m.steps.rbegin(); it != m.steps.rend(); ++it)
            b.push_back(encode(it->pattern, it->binding, it->rule_id, it->slot));
        out.insert(std::move(b));
    }
    return out;
}

std::vector<Scenario> brute_force_scenarios(const WorldState& initial, const std::vector<TechnicalEvent>& evidence,
                                            const ActionLibrary& lib, const SearchBounds& bounds)
{
    return TechnicalOracle(initial, evidence, lib, bounds).run();
}

std::string scenario_key(const Scenario& w)
{
    std::ostringstream out;
    for (const auto& a : w.actions) {
        out << a.action_id << "(";
        for (const auto& [k, v] : a.bindings.params)
            out << k << "=" << v << ",";
        for (const auto& [k, c] : a.bindings.changes)
            out << k << ":" << c.old_value << ">" << c.new_value << ",";
        out << ") ";
    }
    for (const auto& s : w.states)
        out << "|" << s.key();
    return out.str();
}

std::set<std::string> scenario_keys(const std::vector<Scenario>& scenarios)
{
    std::set<std::string> out;
    for (const auto& w : scenarios)
        out.insert(scenario_key(w));
    return out;
}

} // namespace imdpm::testing
