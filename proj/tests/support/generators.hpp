#pragma once

#include "imdpm/attack_library.hpp"
#include "imdpm/medical_inference.hpp"
#include "imdpm/reconstruction.hpp"
#include "imdpm/rulebook.hpp"
#include "imdpm/simulator.hpp"

#include <random>

namespace imdpm::testing {

using Rng = std::mt19937_64;

struct MedicalCase
{
    MedicalLog log; // labeled, exactly one heart death
    RuleSet rules;
    InferenceConfig cfg;
};

// At most `max_events` events (heart death included) and `max_rules` rules.
MedicalCase random_medical_case(Rng& rng, int max_events = 6, int max_rules = 4);

struct TechnicalCase
{
    ActionLibrary lib;
    WorldState initial;
    std::vector<TechnicalEvent> evidence;
    SearchBounds bounds;
};

// A random library over a handful of boolean flags plus evidence of at most
// `max_events` events, half the time produced by a walk of that library.
TechnicalCase random_technical_case(Rng& rng, int max_actions = 5, int max_events = 3);

// A valid state with arbitrary flags, sessions, budget and battery.
WorldState random_world_state(Rng& rng);

// Parameters and therapy changes for any builtin action, drawn from small
// pools that include the sessions currently held in `s`.
expr::Bindings random_bindings(const ActionDef& def, const WorldState& s, Rng& rng, bool budget_changes = true);

// Up to `max_size` builtin actions.
ActionLibrary random_builtin_subset(Rng& rng, std::size_t max_size = 12);

struct ScriptOptions
{
    int max_actions = 8;
    int max_stimuli = 10;
    bool budget_changes = true; // allow max_shocks / shock_window_ms edits
    bool heart_death = true;
};

// A script whose every action is enabled at its time.
ScenarioScript random_script(const ActionLibrary& lib, Rng& rng, const ScriptOptions& options = {});

} // namespace imdpm::testing
