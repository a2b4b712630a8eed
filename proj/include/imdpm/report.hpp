#pragma once

#include "imdpm/correlation.hpp"
#include "imdpm/evidence.hpp"
#include "imdpm/medical_inference.hpp"
#include "imdpm/reconstruction.hpp"
#include "imdpm/rulebook.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace imdpm {

// Labels come from the evidence when every arrhythmia carries one;
// otherwise the whole log is classified against the expectation.
MedicalLog labeled_medical_log(const EvidenceBundle& bundle);

nlohmann::json medical_scenarios_to_json(const std::vector<MedicalScenario>& scenarios);
// Rebinds steps against `labeled`. Throws ValidationError when an index
// does not point at a matching event.
std::vector<MedicalScenario> medical_scenarios_from_json(const nlohmann::json& j, const MedicalLog& labeled);

nlohmann::json technical_scenarios_to_json(const ScenarioList& list, const ActionLibrary& lib);
// Replays each action list from its initial state to rebuild the states.
ScenarioList technical_scenarios_from_json(const nlohmann::json& j, const ActionLibrary& lib);

struct PairVerdict
{
    std::size_t medical = 0;
    std::size_t technical = 0;
    Verdict verdict;
};

struct CorrelationReport
{
    VerdictStatus status = VerdictStatus::not_proven;
    std::vector<PairVerdict> pairs; // grouped by technical scenario
};

// Every medical scenario against every technical scenario. The overall
// status is proven when some pair is, uncorrelatable when every medical
// scenario is.
CorrelationReport correlate_all(const std::vector<MedicalScenario>& medical, const ScenarioList& technical,
                                const MedicalLog& labeled, const ActionLibrary& lib,
                                const TherapyExpectation& expectation, const CausalTable& table);

nlohmann::json correlation_report_json(const CorrelationReport& report, const std::vector<MedicalScenario>& medical,
                                       const ScenarioList& technical);
std::string correlation_report_text(const CorrelationReport& report, const std::vector<MedicalScenario>& medical,
                                    const ScenarioList& technical);

struct InvestigationInputs
{
    RuleSet rules;
    ActionLibrary actions;
    CausalTable causal_table;
    InferenceConfig inference;
    SearchBounds bounds;
    std::vector<WorldState> initial_states; // empty: the bundle's initial state
};

struct InvestigationResult
{
    MedicalLog labeled;
    ScenarioNode tree;
    std::vector<MedicalScenario> medical;
    ScenarioGraph graph;
    ScenarioList technical;
    CorrelationReport correlation;
};

InvestigationResult investigate(const EvidenceBundle& bundle, const InvestigationInputs& inputs);

} // namespace imdpm
