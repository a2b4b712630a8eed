#include "imdpm/medical_inference.hpp"

#include "imdpm/errors.hpp"

#include <algorithm>
#include <sstream>

namespace imdpm {

using nlohmann::json;

void InferenceConfig::validate() const
{
    if (max_age.millis <= 0 || max_depth <= 0 || max_unobservable_chain < 0 || default_window.millis <= 0)
        throw ValidationError("inference configuration values must be positive");
}

std::size_t ScenarioNode::size() const
{
    std::size_t total = 1;
    for (const auto& c : children)
        total += c.size();
    return total;
}

std::size_t ScenarioNode::depth() const
{
    std::size_t deepest = 0;
    for (const auto& c : children)
        deepest = std::max(deepest, c.depth() + 1);
    return deepest;
}

std::string ScenarioNode::label() const
{
    if (event)
        return describe(*event);
    return pattern.to_dsl() + " (hypothesized)";
}

namespace {

class Engine
{
public:
    Engine(const MedicalLog& log, const RuleSet& rules, const InferenceConfig& cfg) : _log(log), _cfg(cfg)
    {
        for (const auto& r : rules.rules)
            _rules.push_back(&r);
        std::stable_sort(_rules.begin(), _rules.end(),
                         [](const MedicalRule* a, const MedicalRule* b) { return natural_less(a->id, b->id); });

        std::optional<std::size_t> hd;
        for (std::size_t i = 0; i < log.events.size(); ++i) {
            const auto& ev = log.events[i];
            if (ev.is_heart_death()) {
                if (hd)
                    throw ValidationError("medical log holds more than one heart death");
                hd = i;
            } else if (ev.is_arrhythmia()) {
                if (!ev.label)
                    throw ValidationError("unlabeled arrhythmia " + describe(ev));
                _arrhythmias.push_back(i);
            }
        }
        if (!hd)
            throw ValidationError("medical log holds no heart death");
        _hd = *hd;
    }

    ScenarioNode run()
    {
        ScenarioNode root;
        root.pattern = EventPattern::heart_death();
        root.binding = _hd;
        root.event = _log.events[_hd];
        std::size_t cursor = 0;
        while (cursor < _arrhythmias.size() && _arrhythmias[cursor] < _hd)
            ++cursor;
        expand(root, cursor, _log.events[_hd].at, 0, 0);
        return root;
    }

private:
    struct Cursor
    {
        std::size_t pos;  // candidates are _arrhythmias[0, pos)
        Timestamp anchor; // time of the latest bound event of the chain
    };

    bool too_old(std::size_t log_index) const
    {
        return _log.events[_hd].at - _log.events[log_index].at > _cfg.max_age;
    }

    bool recent_evidence_left(std::size_t pos) const
    {
        for (std::size_t i = 0; i < pos; ++i)
            if (!too_old(_arrhythmias[i]))
                return true;
        return false;
    }

    std::optional<std::size_t> bind(const EventPattern& pattern, Cursor& c, Duration window) const
    {
        std::size_t pos = c.pos;
        while (pos > 0) {
            --pos;
            auto li = _arrhythmias[pos];
            const auto& ev = _log.events[li];
            if (!pattern.matches(ev)) {
                if (_cfg.skip_ok_events && ev.label == ResponseLabel::OK)
                    continue;
                return std::nullopt;
            }
            if (c.anchor - ev.at > window || too_old(li))
                return std::nullopt;
            c.pos = pos;
            c.anchor = ev.at;
            return li;
        }
        return std::nullopt;
    }

    ScenarioNode make_node(const EventPattern& pattern, std::optional<std::size_t> li, const std::string& rule) const
    {
        ScenarioNode n;
        n.pattern = pattern;
        n.rule_id = rule;
        if (li) {
            n.binding = li;
            n.event = _log.events[*li];
        }
        return n;
    }

    // Nodes appended by one rule application, latest first.
    std::optional<std::vector<ScenarioNode>> apply(const MedicalRule& r, const ScenarioNode& node, Cursor& c) const
    {
        std::vector<ScenarioNode> chain;
        for (int i = 1; i < r.m; ++i) {
            if (node.binding) {
                auto li = bind(r.consequent, c, r.window);
                if (!li)
                    return std::nullopt;
                chain.push_back(make_node(r.consequent, li, r.id));
            } else {
                chain.push_back(make_node(r.consequent, std::nullopt, r.id));
            }
        }
        for (int rep = 0; rep < r.n; ++rep) {
            for (auto it = r.premise.rbegin(); it != r.premise.rend(); ++it) {
                if (!it->observable()) {
                    chain.push_back(make_node(*it, std::nullopt, r.id));
                    continue;
                }
                auto li = bind(*it, c, r.window);
                if (!li)
                    return std::nullopt;
                chain.push_back(make_node(*it, li, r.id));
            }
        }
        return chain;
    }

    void expand(ScenarioNode& node, std::size_t pos, Timestamp anchor, int depth, int unobservable_run)
    {
        if (!recent_evidence_left(pos))
            return;
        for (const auto* r : _rules) {
            bool fires = node.event ? consequent_matches(*r, *node.event) : consequent_matches(*r, node.pattern);
            if (!fires)
                continue;
            int run = r->premise_unobservable_only() ? unobservable_run + 1 : 0;
            if (run > _cfg.max_unobservable_chain) {
                node.truncated = true;
                continue;
            }
            Cursor c{pos, anchor};
            auto chain = apply(*r, node, c);
            if (!chain)
                continue;
            int leaf_depth = depth + static_cast<int>(chain->size());
            if (leaf_depth > _cfg.max_depth) {
                node.truncated = true;
                continue;
            }
            for (std::size_t i = 0; i < chain->size(); ++i)
                (*chain)[i].slot = static_cast<int>(i);
            expand(chain->back(), c.pos, c.anchor, leaf_depth, run);
            for (std::size_t i = chain->size() - 1; i > 0; --i)
                (*chain)[i - 1].children.push_back(std::move((*chain)[i]));
            node.children.push_back(std::move(chain->front()));
        }
    }

    const MedicalLog& _log;
    const InferenceConfig& _cfg;
    std::vector<const MedicalRule*> _rules;
    std::vector<std::size_t> _arrhythmias; // log indices, chronological
    std::size_t _hd = 0;
};

void collect(const ScenarioNode& node, std::vector<const ScenarioNode*>& path, std::vector<MedicalScenario>& out)
{
    path.push_back(&node);
    if (node.children.empty()) {
        MedicalScenario s;
        for (auto it = path.rbegin(); it != path.rend(); ++it)
            s.steps.push_back(ScenarioStep{(*it)->pattern, (*it)->binding, (*it)->event, (*it)->rule_id, (*it)->slot});
        out.push_back(std::move(s));
    }
    for (const auto& c : node.children)
        collect(c, path, out);
    path.pop_back();
}

json pattern_json(const EventPattern& p)
{
    return p.to_dsl();
}

} // namespace

ScenarioNode infer_tree(const MedicalLog& medical, const RuleSet& rules, const InferenceConfig& cfg)
{
    cfg.validate();
    return Engine(medical, rules, cfg).run();
}

std::vector<std::string> MedicalScenario::rule_sequence() const
{
    std::vector<std::string> out;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it)
        if (it->rule_id)
            out.push_back(*it->rule_id);
    return out;
}

std::vector<std::string> MedicalScenario::applications() const
{
    std::vector<std::string> out;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it)
        if (it->rule_id && it->slot == 0)
            out.push_back(*it->rule_id);
    return out;
}

std::vector<std::size_t> MedicalScenario::bound_indices() const
{
    std::vector<std::size_t> out;
    for (const auto& s : steps)
        if (s.binding)
            out.push_back(*s.binding);
    return out;
}

std::vector<MedicalEvent> MedicalScenario::bound_events() const
{
    std::vector<MedicalEvent> out;
    for (const auto& s : steps)
        if (s.event)
            out.push_back(*s.event);
    return out;
}

std::optional<Timestamp> MedicalScenario::start() const
{
    for (const auto& s : steps)
        if (s.event && s.event->is_arrhythmia())
            return s.event->at;
    return std::nullopt;
}

bool rule_sequence_less(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [](const std::string& x, const std::string& y) { return natural_less(x, y); });
}

std::vector<MedicalScenario> enumerate_scenarios(const ScenarioNode& root)
{
    std::vector<MedicalScenario> out;
    std::vector<const ScenarioNode*> path;
    collect(root, path, out);
    std::stable_sort(out.begin(), out.end(), [](const MedicalScenario& a, const MedicalScenario& b) {
        return rule_sequence_less(a.rule_sequence(), b.rule_sequence());
    });
    return out;
}

json tree_to_json(const ScenarioNode& node)
{
    json j = {{"pattern", pattern_json(node.pattern)}, {"label", node.label()}};
    j["rule"] = node.rule_id ? json(*node.rule_id) : json(nullptr);
    if (node.binding) {
        j["binding"] = {{"index", *node.binding}, {"t_ms", node.event->at.millis}};
        if (node.event->label)
            j["binding"]["label"] = std::string(to_string(*node.event->label));
    } else {
        j["binding"] = nullptr;
    }
    if (node.truncated)
        j["truncated"] = true;
    j["children"] = json::array();
    for (const auto& c : node.children)
        j["children"].push_back(tree_to_json(c));
    return j;
}

std::string tree_to_dot(const ScenarioNode& root)
{
    std::ostringstream out;
    out << "digraph medical_tree {\n  rankdir=BT;\n  node [shape=box];\n";
    std::size_t next = 0;
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\')
                q += '\\';
            q += c;
        }
        return q + "\"";
    };
    auto walk = [&](auto&& self, const ScenarioNode& node) -> std::size_t {
        auto id = next++;
        out << "  n" << id << " [label=" << quote(node.label()) << (node.hypothesized() ? ", style=dashed" : "")
            << "];\n";
        for (const auto& c : node.children) {
            auto cid = self(self, c);
            out << "  n" << cid << " -> n" << id << " [label=" << quote(c.rule_id.value_or("")) << "];\n";
        }
        return id;
    };
    walk(walk, root);
    out << "}\n";
    return out.str();
}

json scenario_to_json(const MedicalScenario& scenario)
{
    json steps = json::array();
    for (const auto& s : scenario.steps) {
        json step = {{"pattern", pattern_json(s.pattern)}};
        step["rule"] = s.rule_id ? json(*s.rule_id) : json(nullptr);
        step["slot"] = s.slot;
        if (s.event) {
            step["index"] = *s.binding;
            step["event"] = describe(*s.event);
            step["t_ms"] = s.event->at.millis;
        } else {
            step["hypothesized"] = true;
        }
        steps.push_back(step);
    }
    return {{"rules", scenario.applications()}, {"steps", steps}};
}

} // namespace imdpm
