#pragma once

#include "imdpm/attack_library.hpp"
#include "imdpm/model.hpp"
#include "imdpm/world_state.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace imdpm {

// <s0, A1, s1, ..., An, sn>
struct Scenario
{
    std::vector<WorldState> states; // states.size() == actions.size() + 1
    std::vector<ActionInstance> actions;

    [[nodiscard]] std::vector<std::string> action_ids() const;
    // Throws ValidationError unless every action is enabled in its source
    // state and produces the next state.
    void validate(const ActionLibrary& lib) const;
};

using ObservableTrace = std::vector<TechnicalEvent>;

struct SearchBounds
{
    int max_invisible_run = 4;
    int max_total_steps = 32;
    int max_scenarios = 10'000;
    bool strict_payload = false;

    void validate() const;
};

struct SearchStats
{
    std::size_t labels_expanded = 0;
    std::size_t states_explored = 0;
    std::size_t states_kept = 0;
    std::size_t edges_kept = 0;
    std::size_t accepting = 0;
};

struct ScenarioGraph
{
    struct Node
    {
        WorldState state;
        std::size_t consumed = 0; // evidence events explained so far
        bool accepting = false;
        bool secure = true;
    };
    struct Edge
    {
        std::size_t from = 0;
        std::size_t to = 0;
        ActionInstance action;
        bool visible = false;
        bool malicious = false;
        std::vector<TechnicalEvent> emitted;
    };

    std::vector<Node> nodes;
    std::vector<Edge> edges; // sorted by (from, action, to)
    std::vector<std::size_t> roots; // one per initial state that explains the evidence
    std::vector<TechnicalEvent> evidence;
    SearchStats stats;

    [[nodiscard]] bool empty() const { return nodes.empty(); }
    [[nodiscard]] std::vector<std::size_t> out_edges(std::size_t node) const;
};

struct ScenarioList
{
    std::vector<Scenario> scenarios;
    bool truncated = false;
};

ObservableTrace obs_scenario(const Scenario& w, const ActionLibrary& lib);

// Kind and payload fields are compared; timestamps are not. Therapy changes
// are compared by parameter name, or fully with `strict_payload`.
bool event_matches(const TechnicalEvent& observed, const TechnicalEvent& recorded, bool strict_payload = false);
bool matches_prefix(const ObservableTrace& trace, const std::vector<TechnicalEvent>& evidence,
                    bool strict_payload = false);

ScenarioGraph reconstruct(const WorldState& initial, const std::vector<TechnicalEvent>& evidence,
                          const ActionLibrary& lib, const SearchBounds& bounds = {});
// Union over candidate initial states.
ScenarioGraph reconstruct(const std::vector<WorldState>& initials, const std::vector<TechnicalEvent>& evidence,
                          const ActionLibrary& lib, const SearchBounds& bounds = {});

// Accepting paths in lexicographic order of their action sequences. Paths
// exceed neither bound and never revisit a node.
ScenarioList scenarios_of(const ScenarioGraph& g, const SearchBounds& bounds = {});

bool is_malicious(const Scenario& w, const ActionLibrary& lib);

// True when `w` is an accepting path of `g`.
bool graph_contains(const ScenarioGraph& g, const Scenario& w);

bool scenario_less(const Scenario& a, const Scenario& b);

nlohmann::json instance_to_json(const ActionInstance& a);
ActionInstance instance_from_json(const nlohmann::json& j);

nlohmann::json graph_to_json(const ScenarioGraph& g);
std::string graph_to_dot(const ScenarioGraph& g);
nlohmann::json scenario_to_json(const Scenario& w, const ActionLibrary& lib);
nlohmann::json stats_to_json(const SearchStats& s);

} // namespace imdpm
