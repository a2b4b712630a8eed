#pragma once

#include "imdpm/attack_library.hpp"
#include "imdpm/medical_inference.hpp"
#include "imdpm/reconstruction.hpp"
#include "imdpm/simulator.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace imdpm {

enum class EffectKind {
    therapy_thresholds_changed,
    therapy_disabled,
    shock_budget_consumed,
    clock_changed,
    firmware_changed,
    battery_drained,
};

// "TherapyThresholdsChanged", ...
std::string_view to_string(EffectKind kind);
EffectKind parse_effect_kind(std::string_view token);

struct SuspiciousResponse
{
    std::size_t step = 0; // position in MedicalScenario::steps
    std::size_t event_index = 0;
    MedicalEvent event;
    ResponseLabel label = ResponseLabel::IR;
};

struct FieldDelta
{
    FieldValue before;
    FieldValue after;

    bool operator==(const FieldDelta&) const = default;
};

struct MaliciousEffect
{
    EffectKind kind = EffectKind::therapy_thresholds_changed;
    std::string action_id;
    std::vector<std::size_t> steps;  // positions in Scenario::actions, merged per (kind, action)
    std::optional<Timestamp> at;     // first contributing action, or the last visible action before it
    std::map<std::string, FieldDelta> delta;
    ImdState before;                 // device before the first contributing action
    ImdState after;                  // device after the last one
};

enum class LinkScope { any, affected_kinds };

struct CausalLink
{
    std::string id;
    EffectKind effect = EffectKind::therapy_thresholds_changed;
    ResponseLabel response = ResponseLabel::IR;
    LinkScope scope = LinkScope::any;
    std::string description;
};

struct CausalTable
{
    std::vector<CausalLink> links;

    // Throws ParseError or ValidationError (duplicate ids, OK responses).
    static CausalTable parse(std::string_view text);
    static const CausalTable& builtin();
    static std::string_view builtin_text();
};

enum class FindingGrade { table_linked, counterfactual_confirmed };
std::string_view to_string(FindingGrade g);

struct CorrelationFinding
{
    MaliciousEffect cause;
    std::vector<SuspiciousResponse> responses;
    std::string link_id;
    FindingGrade grade = FindingGrade::table_linked;
};

enum class VerdictStatus { proven, not_proven, uncorrelatable };
std::string_view to_string(VerdictStatus s);

struct Verdict
{
    VerdictStatus status = VerdictStatus::not_proven;
    bool lethal_attack_proven = false;
    std::vector<CorrelationFinding> findings;
    std::vector<std::string> narrative; // time-ordered
};

// IR/AR-labeled bound events in scenario order.
std::vector<SuspiciousResponse> suspicious_responses(const MedicalScenario& m);

// Effects of malicious actions, from the diff of adjacent states. Repeated
// effects of one action id merge into a single entry spanning first to last.
std::vector<MaliciousEffect> malicious_effects(const Scenario& w, const ActionLibrary& lib);

// Whether an arrhythmia at the event's rate is detected or shocked
// differently under the two settings.
bool settings_affect(const TherapySettings& before, const TherapySettings& after, const MedicalEvent& ev);

struct CorrelationOptions
{
    // Arrhythmias fed to the counterfactual replay; defaults to the
    // scenario's bound arrhythmias.
    std::optional<StimulusTimeline> stimuli;
    ResponseModel model;
};

// Throws TimelineError when a malicious effect postdates the heart death.
Verdict correlate(const MedicalScenario& m, const Scenario& w, const ActionLibrary& lib,
                  const TherapyExpectation& expectation, const CausalTable& table = CausalTable::builtin(),
                  const CorrelationOptions& options = {});

nlohmann::json verdict_to_json(const Verdict& v);
nlohmann::json effect_to_json(const MaliciousEffect& e);

} // namespace imdpm
