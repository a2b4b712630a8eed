#include "fixtures.hpp"

#include "imdpm/errors.hpp"

#include <fstream>
#include <sstream>

namespace imdpm::testing {

std::string data_path(const std::string& relative)
{
    return std::string(IMDPM_DATA_DIR) + "/" + relative;
}

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

EvidenceBundle case_bundle()
{
    return parse_evidence_bundle(read_text(data_path("reference_incident/evidence.json")));
}

ScenarioScript case_script()
{
    return parse_script(read_text(data_path("reference_incident/script.json")));
}

WorldState case_initial_weak_encryption()
{
    return parse_json_document(read_text(data_path("reference_incident/initial_weak_encryption.json")), "state")
        .get<WorldState>();
}

WorldState case_initial_plaintext()
{
    return parse_json_document(read_text(data_path("reference_incident/initial_plaintext.json")), "state").get<WorldState>();
}

Scenario physician_session(const ActionLibrary& lib)
{
    Scenario w;
    WorldState s;
    s.physician.in_range = true;
    w.states.push_back(s);

    auto step = [&](const std::string& id, expr::Bindings b, std::int64_t t) {
        b.at = Timestamp{t};
        auto next = apply(lib.at(id), w.states.back(), b).state;
        w.actions.push_back(ActionInstance{id, b});
        w.states.push_back(next);
    };
    step("physician_open_session", {{{"user_id", "dr_martin"}, {"session_id", "S-4711"}}, {}, {}}, 1'000'000);
    step("physician_modify_therapy", {{}, {{"VF.detect_min_bpm", ParamChange{240, 140}}}, {}}, 1'060'000);
    step("physician_close_session", {{{"session_id", "S-4711"}}, {}, {}}, 1'120'000);
    return w;
}

} // namespace imdpm::testing
