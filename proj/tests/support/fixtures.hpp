#pragma once

#include "imdpm/evidence.hpp"
#include "imdpm/simulator.hpp"

#include <string>
#include <vector>

namespace imdpm::testing {

std::string data_path(const std::string& relative);
std::string read_text(const std::string& path);

// The reference incident: a weak-encryption and a plaintext variant of the
// initial state, the recorded evidence and the script that produces it.
EvidenceBundle case_bundle();
ScenarioScript case_script();
WorldState case_initial_weak_encryption();
WorldState case_initial_plaintext();

// A physician session that opens, reprograms and closes legitimately.
Scenario physician_session(const ActionLibrary& lib);

} // namespace imdpm::testing
