#include "imdpm/reconstruction.hpp"

#include "imdpm/errors.hpp"
#include "imdpm/evidence.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace imdpm {

using nlohmann::json;

std::vector<std::string> Scenario::action_ids() const
{
    std::vector<std::string> out;
    for (const auto& a : actions)
        out.push_back(a.action_id);
    return out;
}

void Scenario::validate(const ActionLibrary& lib) const
{
    if (states.size() != actions.size() + 1)
        throw ValidationError("scenario must hold one more state than actions");
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const auto& def = lib.at(actions[i].action_id);
        if (!enabled(def, states[i], actions[i].bindings))
            throw ValidationError("scenario step " + std::to_string(i + 1) + " (" + actions[i].label() +
                                  ") is not enabled");
        if (apply(def, states[i], actions[i].bindings).state != states[i + 1])
            throw ValidationError("scenario step " + std::to_string(i + 1) + " (" + actions[i].label() +
                                  ") does not produce the recorded state");
    }
}

void SearchBounds::validate() const
{
    if (max_invisible_run < 1 || max_total_steps < 1 || max_scenarios < 1)
        throw ValidationError("search bounds must be at least 1");
}

std::vector<std::size_t> ScenarioGraph::out_edges(std::size_t node) const
{
    std::vector<std::size_t> out;
    auto first = std::lower_bound(edges.begin(), edges.end(), node,
                                  [](const Edge& e, std::size_t n) { return e.from < n; });
    for (auto it = first; it != edges.end() && it->from == node; ++it)
        out.push_back(static_cast<std::size_t>(it - edges.begin()));
    return out;
}

ObservableTrace obs_scenario(const Scenario& w, const ActionLibrary& lib)
{
    ObservableTrace trace;
    for (const auto& a : w.actions) {
        const auto& def = lib.at(a.action_id);
        if (!def.visible())
            continue;
        for (auto& ev : emit(def, a.bindings))
            trace.push_back(std::move(ev));
    }
    return trace;
}

bool event_matches(const TechnicalEvent& observed, const TechnicalEvent& recorded, bool strict_payload)
{
    if (observed.kind != recorded.kind || observed.fields != recorded.fields)
        return false;
    if (strict_payload)
        return observed.changes == recorded.changes;
    if (observed.changes.size() != recorded.changes.size())
        return false;
    return std::equal(observed.changes.begin(), observed.changes.end(), recorded.changes.begin(),
                      [](const auto& a, const auto& b) { return a.first == b.first; });
}

bool matches_prefix(const ObservableTrace& trace, const std::vector<TechnicalEvent>& evidence, bool strict_payload)
{
    if (trace.size() > evidence.size())
        return false;
    for (std::size_t i = 0; i < trace.size(); ++i)
        if (!event_matches(trace[i], evidence[i], strict_payload))
            return false;
    return true;
}

namespace {

struct Successor
{
    std::size_t to;
    ActionInstance action;
    bool visible;
    bool malicious;
    std::vector<TechnicalEvent> emitted;
};

class Explorer
{
public:
    Explorer(const std::vector<TechnicalEvent>& evidence, const ActionLibrary& lib, const SearchBounds& bounds)
        : _evidence(evidence), _lib(lib), _bounds(bounds)
    {
    }

    void add_root(const WorldState& s)
    {
        auto id = intern(s, 0);
        if (std::find(_roots.begin(), _roots.end(), id) == _roots.end())
            _roots.push_back(id);
        offer(id, 0, 0);
    }

    ScenarioGraph run()
    {
        while (!_queue.empty()) {
            auto [node, run, steps] = _queue.front();
            _queue.pop_front();
            ++_stats.labels_expanded;
            if (steps >= _bounds.max_total_steps)
                continue;
            for (const auto& succ : successors(node)) {
                int next_run = succ.visible ? 0 : run + 1;
                if (next_run > _bounds.max_invisible_run)
                    continue;
                _used.insert({node, succ.to, succ.action.label()});
                offer(succ.to, next_run, steps + 1);
            }
        }
        return build();
    }

private:
    struct Raw
    {
        WorldState state;
        std::size_t consumed;
    };

    std::size_t intern(const WorldState& s, std::size_t consumed)
    {
        auto key = s.key() + "#" + std::to_string(consumed);
        auto [it, inserted] = _index.emplace(key, _raw.size());
        if (inserted) {
            _raw.push_back({s, consumed});
            _labels.emplace_back();
            _successors.emplace_back();
            _computed.push_back(false);
        }
        return it->second;
    }

    // Keeps only Pareto-minimal (invisible run, steps) labels per node.
    void offer(std::size_t node, int run, int steps)
    {
        auto& labels = _labels[node];
        for (const auto& [r, s] : labels)
            if (r <= run && s <= steps)
                return;
        std::erase_if(labels, [&](const auto& l) { return run <= l.first && steps <= l.second; });
        labels.emplace_back(run, steps);
        _queue.emplace_back(node, run, steps);
    }

    const std::vector<Successor>& successors(std::size_t node)
    {
        if (_computed[node])
            return _successors[node];
        _computed[node] = true;
        ++_stats.states_explored;
        std::vector<Successor> out;
        const WorldState s = _raw[node].state;
        const std::size_t consumed = _raw[node].consumed;
        for (const auto& def : _lib.actions()) {
            if (def.visible()) {
                if (consumed >= _evidence.size())
                    continue;
                std::span<const TechnicalEvent> rest(_evidence.data() + consumed, _evidence.size() - consumed);
                auto bindings = bind_from_evidence(def, rest, s, _bounds.strict_payload);
                if (!bindings || !enabled(def, s, *bindings))
                    continue;
                ApplyResult r;
                try {
                    r = apply(def, s, *bindings);
                } catch (const Error&) {
                    continue;
                }
                if (!matches_prefix(r.emitted, {rest.begin(), rest.end()}, _bounds.strict_payload))
                    continue;
                auto to = intern(r.state, consumed + r.emitted.size());
                out.push_back({to, ActionInstance{def.id, *bindings}, true, def.malicious(), std::move(r.emitted)});
            } else {
                for (auto& inst : hypothesize(def, s)) {
                    if (!enabled(def, s, inst.bindings))
                        continue;
                    ApplyResult r;
                    try {
                        r = apply(def, s, inst.bindings);
                    } catch (const Error&) {
                        continue;
                    }
                    if (r.state == s)
                        continue;
                    auto to = intern(r.state, consumed);
                    out.push_back({to, std::move(inst), false, def.malicious(), {}});
                }
            }
        }
        // intern() may have grown the vectors; index again.
        _successors[node] = std::move(out);
        return _successors[node];
    }

    ScenarioGraph build()
    {
        const std::size_t n = _raw.size();
        std::vector<std::vector<std::size_t>> reverse(n);
        std::vector<const Successor*> used_edges;
        std::vector<std::size_t> used_from;
        for (std::size_t from = 0; from < n; ++from) {
            for (const auto& succ : _successors[from]) {
                if (!_used.contains({from, succ.to, succ.action.label()}))
                    continue;
                reverse[succ.to].push_back(from);
                used_edges.push_back(&succ);
                used_from.push_back(from);
            }
        }

        std::vector<bool> live(n, false);
        std::deque<std::size_t> work;
        for (std::size_t i = 0; i < n; ++i) {
            if (_raw[i].consumed == _evidence.size() && !_labels[i].empty()) {
                live[i] = true;
                work.push_back(i);
            }
        }
        while (!work.empty()) {
            auto v = work.front();
            work.pop_front();
            for (auto u : reverse[v]) {
                if (!live[u]) {
                    live[u] = true;
                    work.push_back(u);
                }
            }
        }

        ScenarioGraph g;
        g.evidence = _evidence;
        std::vector<std::size_t> renumber(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (!live[i])
                continue;
            renumber[i] = g.nodes.size();
            bool accepting = _raw[i].consumed == _evidence.size();
            g.nodes.push_back({_raw[i].state, _raw[i].consumed, accepting, _lib.is_secure(_raw[i].state)});
            if (accepting)
                ++g.stats.accepting;
        }
        for (auto r : _roots)
            if (live[r])
                g.roots.push_back(renumber[r]);
        for (std::size_t k = 0; k < used_edges.size(); ++k) {
            const auto& succ = *used_edges[k];
            if (!live[used_from[k]] || !live[succ.to])
                continue;
            g.edges.push_back({renumber[used_from[k]], renumber[succ.to], succ.action, succ.visible, succ.malicious,
                               succ.emitted});
        }
        std::sort(g.edges.begin(), g.edges.end(), [](const ScenarioGraph::Edge& a, const ScenarioGraph::Edge& b) {
            if (a.from != b.from)
                return a.from < b.from;
            if (instance_less(a.action, b.action))
                return true;
            if (instance_less(b.action, a.action))
                return false;
            return a.to < b.to;
        });
        g.stats.labels_expanded = _stats.labels_expanded;
        g.stats.states_explored = _stats.states_explored;
        g.stats.states_kept = g.nodes.size();
        g.stats.edges_kept = g.edges.size();
        return g;
    }

    const std::vector<TechnicalEvent>& _evidence;
    const ActionLibrary& _lib;
    const SearchBounds& _bounds;
    std::vector<Raw> _raw;
    std::unordered_map<std::string, std::size_t> _index;
    std::vector<std::vector<std::pair<int, int>>> _labels;
    std::vector<std::vector<Successor>> _successors;
    std::vector<bool> _computed;
    std::set<std::tuple<std::size_t, std::size_t, std::string>> _used;
    std::deque<std::tuple<std::size_t, int, int>> _queue;
    std::vector<std::size_t> _roots;
    SearchStats _stats;
};

class Decoder
{
public:
    Decoder(const ScenarioGraph& g, const SearchBounds& bounds) : _g(g), _bounds(bounds), _on_path(g.nodes.size()) {}

    bool decode(std::size_t root, std::vector<Scenario>& out)
    {
        _out = &out;
        _edges.clear();
        return walk(root, 0, 0);
    }

private:
    // Returns false once the scenario limit is exceeded.
    bool walk(std::size_t node, int run, int steps)
    {
        if (_g.nodes[node].accepting && !emit_current(node))
            return false;
        if (steps >= _bounds.max_total_steps)
            return true;
        _on_path[node] = true;
        bool keep_going = true;
        for (auto e : _g.out_edges(node)) {
            const auto& edge = _g.edges[e];
            if (_on_path[edge.to])
                continue;
            int next_run = edge.visible ? 0 : run + 1;
            if (next_run > _bounds.max_invisible_run)
                continue;
            _edges.push_back(e);
            keep_going = walk(edge.to, next_run, steps + 1);
            _edges.pop_back();
            if (!keep_going)
                break;
        }
        _on_path[node] = false;
        return keep_going;
    }

    bool emit_current(std::size_t node)
    {
        if (_out->size() >= static_cast<std::size_t>(_bounds.max_scenarios))
            return false;
        Scenario w;
        ObservableTrace trace;
        std::size_t at = _edges.empty() ? node : _g.edges[_edges.front()].from;
        w.states.push_back(_g.nodes[at].state);
        for (auto e : _edges) {
            const auto& edge = _g.edges[e];
            w.actions.push_back(edge.action);
            w.states.push_back(_g.nodes[edge.to].state);
            trace.insert(trace.end(), edge.emitted.begin(), edge.emitted.end());
        }
        if (trace.size() != _g.evidence.size() || !matches_prefix(trace, _g.evidence, _bounds.strict_payload))
            throw Error("decoded scenario does not reproduce the technical evidence");
        _out->push_back(std::move(w));
        return true;
    }

    const ScenarioGraph& _g;
    const SearchBounds& _bounds;
    std::vector<bool> _on_path;
    std::vector<std::size_t> _edges;
    std::vector<Scenario>* _out = nullptr;
};

} // namespace

ScenarioGraph reconstruct(const std::vector<WorldState>& initials, const std::vector<TechnicalEvent>& evidence,
                          const ActionLibrary& lib, const SearchBounds& bounds)
{
    bounds.validate();
    Explorer explorer(evidence, lib, bounds);
    for (const auto& s : initials) {
        s.validate();
        explorer.add_root(s);
    }
    return explorer.run();
}

ScenarioGraph reconstruct(const WorldState& initial, const std::vector<TechnicalEvent>& evidence,
                          const ActionLibrary& lib, const SearchBounds& bounds)
{
    return reconstruct(std::vector<WorldState>{initial}, evidence, lib, bounds);
}

bool scenario_less(const Scenario& a, const Scenario& b)
{
    return std::lexicographical_compare(a.actions.begin(), a.actions.end(), b.actions.begin(), b.actions.end(),
                                        instance_less);
}

ScenarioList scenarios_of(const ScenarioGraph& g, const SearchBounds& bounds)
{
    bounds.validate();
    ScenarioList result;
    Decoder decoder(g, bounds);
    for (auto root : g.roots) {
        std::vector<Scenario> found;
        if (!decoder.decode(root, found))
            result.truncated = true;
        result.scenarios.insert(result.scenarios.end(), std::make_move_iterator(found.begin()),
                                std::make_move_iterator(found.end()));
    }
    std::stable_sort(result.scenarios.begin(), result.scenarios.end(), scenario_less);
    if (result.scenarios.size() > static_cast<std::size_t>(bounds.max_scenarios)) {
        result.scenarios.resize(static_cast<std::size_t>(bounds.max_scenarios));
        result.truncated = true;
    }
    return result;
}

bool is_malicious(const Scenario& w, const ActionLibrary& lib)
{
    return std::any_of(w.actions.begin(), w.actions.end(),
                       [&](const ActionInstance& a) { return lib.at(a.action_id).malicious(); });
}

bool graph_contains(const ScenarioGraph& g, const Scenario& w)
{
    if (w.states.size() != w.actions.size() + 1)
        return false;
    for (auto root : g.roots) {
        if (g.nodes[root].state != w.states.front())
            continue;
        std::size_t node = root;
        bool ok = true;
        for (std::size_t i = 0; i < w.actions.size() && ok; ++i) {
            ok = false;
            for (auto e : g.out_edges(node)) {
                const auto& edge = g.edges[e];
                if (edge.action.same_action(w.actions[i]) && g.nodes[edge.to].state == w.states[i + 1]) {
                    node = edge.to;
                    ok = true;
                    break;
                }
            }
        }
        if (ok && g.nodes[node].accepting)
            return true;
    }
    return false;
}

json instance_to_json(const ActionInstance& a)
{
    json j = {{"action", a.action_id}, {"label", a.label()}};
    if (!a.bindings.params.empty())
        j["params"] = a.bindings.params;
    if (!a.bindings.changes.empty()) {
        json changes = json::object();
        for (const auto& [name, c] : a.bindings.changes)
            changes[name] = {{"old", c.old_value}, {"new", c.new_value}};
        j["changes"] = changes;
    }
    if (a.bindings.at)
        j["t_ms"] = a.bindings.at->millis;
    return j;
}

ActionInstance instance_from_json(const json& j)
{
    ActionInstance a;
    a.action_id = j.at("action").get<std::string>();
    if (j.contains("params"))
        a.bindings.params = j.at("params").get<std::map<std::string, std::string>>();
    if (j.contains("changes"))
        for (const auto& [name, c] : j.at("changes").items())
            a.bindings.changes[name] = ParamChange{c.at("old").get<double>(), c.at("new").get<double>()};
    if (j.contains("t_ms"))
        a.bindings.at = Timestamp{j.at("t_ms").get<std::int64_t>()};
    return a;
}

json stats_to_json(const SearchStats& s)
{
    return {{"labels_expanded", s.labels_expanded},
            {"states_explored", s.states_explored},
            {"states_kept", s.states_kept},
            {"edges_kept", s.edges_kept},
            {"accepting_states", s.accepting}};
}

json graph_to_json(const ScenarioGraph& g)
{
    json nodes = json::array();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        nodes.push_back({{"id", i},
                         {"consumed", n.consumed},
                         {"accepting", n.accepting},
                         {"secure", n.secure},
                         {"state", n.state}});
    }
    json edges = json::array();
    for (const auto& e : g.edges) {
        json j = instance_to_json(e.action);
        j["from"] = e.from;
        j["to"] = e.to;
        j["visible"] = e.visible;
        j["malicious"] = e.malicious;
        edges.push_back(j);
    }
    return {{"evidence_events", g.evidence.size()},
            {"roots", g.roots},
            {"nodes", nodes},
            {"edges", edges},
            {"stats", stats_to_json(g.stats)}};
}

std::string graph_to_dot(const ScenarioGraph& g)
{
    std::ostringstream out;
    out << "digraph scenario_graph {\n  rankdir=LR;\n";
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        out << "  s" << i << " [label=\"s" << i << "\\nconsumed " << n.consumed << "\"";
        out << ", shape=" << (n.accepting ? "doublecircle" : "circle");
        if (!n.secure)
            out << ", style=filled, fillcolor=mistyrose";
        out << "];\n";
    }
    for (const auto& e : g.edges) {
        std::string label;
        for (char c : e.action.label()) {
            if (c == '"' || c == '\\')
                label += '\\';
            label += c;
        }
        out << "  s" << e.from << " -> s" << e.to << " [label=\"" << label << "\"";
        if (e.malicious)
            out << ", color=red, fontcolor=red, penwidth=2";
        if (!e.visible)
            out << ", style=dashed";
        out << "];\n";
    }
    out << "}\n";
    return out.str();
}

json scenario_to_json(const Scenario& w, const ActionLibrary& lib)
{
    json actions = json::array();
    for (const auto& a : w.actions) {
        const auto& def = lib.at(a.action_id);
        json j = instance_to_json(a);
        j["category"] = std::string(to_string(def.category));
        j["observability"] = std::string(to_string(def.observability));
        actions.push_back(j);
    }
    json obs = json::array();
    for (const auto& ev : obs_scenario(w, lib))
        obs.push_back(std::string(to_string(ev.kind)));
    return {{"actions", actions}, {"malicious", is_malicious(w, lib)}, {"obs", obs}};
}

} // namespace imdpm
