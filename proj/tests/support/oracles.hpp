#pragma once

#include "imdpm/attack_library.hpp"
#include "imdpm/medical_inference.hpp"
#include "imdpm/reconstruction.hpp"
#include "imdpm/rulebook.hpp"

#include <set>
#include <string>
#include <vector>

namespace imdpm::testing {

// One tree branch from the heart death to a leaf, one line per node:
// "<pattern> <binding or -> <rule or -> <slot>".
using Branch = std::vector<std::string>;

// Branches of infer_tree's result, found by trying every rule at every
// frontier node and every tuple of log indices for its premise slots.
std::multiset<Branch> brute_force_branches(const MedicalLog& log, const RuleSet& rules, const InferenceConfig& cfg);

// The same encoding applied to enumerate_scenarios(infer_tree(...)).
std::multiset<Branch> branches_of(const std::vector<MedicalScenario>& scenarios);

// Accepting scenarios found by enumerating every action string of at most
// bounds.max_total_steps actions, then keeping those whose projection equals
// the evidence, whose invisible runs stay within bounds and that never
// revisit a (state, consumed) pair. Visible parameters range over every
// value the evidence carries.
std::vector<Scenario> brute_force_scenarios(const WorldState& initial, const std::vector<TechnicalEvent>& evidence,
                                            const ActionLibrary& lib, const SearchBounds& bounds);

// Actions with parameters and changes, then state keys; timestamps excluded.
std::string scenario_key(const Scenario& w);
std::set<std::string> scenario_keys(const std::vector<Scenario>& scenarios);

} // namespace imdpm::testing
