#pragma once

#include "imdpm/model.hpp"
#include "imdpm/rulebook.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace imdpm {

struct InferenceConfig
{
    Duration max_age{24 * 3600 * 1000};  // evidence older than this before HD is never bound
    int max_depth = 64;                  // deepest node, root at depth 0
    int max_unobservable_chain = 3;      // consecutive all-unobservable rule applications
    Duration default_window = default_rule_window;
    bool skip_ok_events = false;

    void validate() const;
};

struct ScenarioNode
{
    EventPattern pattern;
    std::optional<std::size_t> binding; // index into MedicalLog::events
    std::optional<MedicalEvent> event;  // copy of the bound event
    std::optional<std::string> rule_id; // absent at the root
    int slot = 0;                       // position within the nodes one application appends
    std::vector<ScenarioNode> children;
    bool truncated = false; // some application was cut by max_depth or the unobservable cap

    [[nodiscard]] bool hypothesized() const { return !binding.has_value(); }
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t depth() const;
    // "VF[AR]@12150000" or "@APE (hypothesized)"
    [[nodiscard]] std::string label() const;

    bool operator==(const ScenarioNode&) const = default;
};

// Backward chaining from the heart death. Throws ValidationError when the
// log does not hold exactly one heart death or an arrhythmia is unlabeled.
ScenarioNode infer_tree(const MedicalLog& medical, const RuleSet& rules, const InferenceConfig& cfg = {});

struct ScenarioStep
{
    EventPattern pattern;
    std::optional<std::size_t> binding;
    std::optional<MedicalEvent> event;
    std::optional<std::string> rule_id;
    int slot = 0;

    bool operator==(const ScenarioStep&) const = default;
};

// Chronological, ending in the heart death.
struct MedicalScenario
{
    std::vector<ScenarioStep> steps;

    // Rule ids from the heart death backwards, one per appended node.
    [[nodiscard]] std::vector<std::string> rule_sequence() const;
    // One rule id per rule application, from the heart death backwards.
    [[nodiscard]] std::vector<std::string> applications() const;
    [[nodiscard]] std::vector<std::size_t> bound_indices() const;
    [[nodiscard]] std::vector<MedicalEvent> bound_events() const;
    // Earliest bound arrhythmia, if any.
    [[nodiscard]] std::optional<Timestamp> start() const;

    bool operator==(const MedicalScenario&) const = default;
};

// One scenario per root-to-leaf branch, ordered by rule-id sequence.
std::vector<MedicalScenario> enumerate_scenarios(const ScenarioNode& root);

bool rule_sequence_less(const std::vector<std::string>& a, const std::vector<std::string>& b);

nlohmann::json tree_to_json(const ScenarioNode& root);
std::string tree_to_dot(const ScenarioNode& root);
nlohmann::json scenario_to_json(const MedicalScenario& scenario);

} // namespace imdpm
