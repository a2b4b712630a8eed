#pragma once

#include "imdpm/attack_library.hpp"
#include "imdpm/evidence.hpp"
#include "imdpm/reconstruction.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace imdpm {

struct Stimulus
{
    Timestamp at;
    ArrhythmiaKind arrhythmia = ArrhythmiaKind::VF;
    std::optional<int> rate_bpm;

    bool operator==(const Stimulus&) const = default;
};

using StimulusTimeline = std::vector<Stimulus>;

struct ScriptedAction
{
    Timestamp at;
    std::string action_id;
    std::map<std::string, std::string> params;
    std::map<std::string, double> changes; // therapy parameter -> new value

    bool operator==(const ScriptedAction&) const = default;
};

struct ScenarioScript
{
    WorldState initial_state;
    std::vector<ScriptedAction> actions;
    StimulusTimeline stimuli;
    std::optional<Timestamp> heart_death;
    std::optional<TherapyExpectation> expectation;
    CaseMeta meta;

    // Throws ValidationError when actions or stimuli are not time-sorted, an
    // action id is unknown, or the heart death precedes another entry.
    void validate(const ActionLibrary& lib) const;
};

ScenarioScript parse_script(std::string_view text);
nlohmann::json script_to_json(const ScenarioScript& script);

struct ResponseModel
{
    Duration latency{2'000};
    // Therapy stays off this long once the shock budget is exhausted;
    // nullopt means the programmed shock window.
    std::optional<Duration> deactivation;
};

// Device-side shock bookkeeping.
struct TherapyRuntime
{
    std::vector<Timestamp> shocks;
    std::optional<Timestamp> deactivated_until;

    [[nodiscard]] int shocks_in_window(Timestamp now, const TherapySettings& settings) const;
    [[nodiscard]] bool budget_available(Timestamp now, const TherapySettings& settings) const;
    void record_shock(Timestamp at, const TherapySettings& settings, const ResponseModel& model);
};

// The shock the device delivers for one arrhythmia, if any.
std::optional<MedicalEvent> imd_response(const MedicalEvent& stimulus, const ImdState& imd, TherapyRuntime& runtime,
                                         const ResponseModel& model = {});

struct SimulationResult
{
    EvidenceBundle bundle;
    Scenario scenario; // the world-state path the script induces
};

// Throws GuardError naming the action and its guard when a scripted action
// is not enabled at its time.
SimulationResult simulate_detailed(const ScenarioScript& script, const ActionLibrary& lib,
                                   const TherapyExpectation& expectation, const ResponseModel& model = {});
EvidenceBundle simulate(const ScenarioScript& script, const ActionLibrary& lib, const TherapyExpectation& expectation,
                        const ResponseModel& model = {});

// Stimuli answered by a device in state `settings` with a fresh shock
// budget, then labeled against the expectation.
MedicalLog counterfactual_replay(const StimulusTimeline& stimuli, const ImdState& settings,
                                 const TherapyExpectation& expectation, const ResponseModel& model = {});

StimulusTimeline stimuli_from(const MedicalLog& log);

} // namespace imdpm
