#include "fixtures.hpp"
#include "generators.hpp"
#include "oracles.hpp"

#include "imdpm/reconstruction.hpp"

#include <doctest.h>

using namespace imdpm;
using namespace imdpm::testing;

namespace {

const std::vector<std::string> s1 = {"eavesdrop_traffic", "bruteforce_credentials", "open_session",
                                     "read_medical_data", "modify_therapy",         "close_session"};
const std::vector<std::string> s2 = {"eavesdrop_traffic", "replay_access",  "open_session",
                                     "read_medical_data", "modify_therapy", "close_session"};

const Scenario* find_ids(const ScenarioList& list, const std::vector<std::string>& ids)
{
    for (const auto& w : list.scenarios)
        if (w.action_ids() == ids)
            return &w;
    return nullptr;
}

std::vector<TechnicalKind> kinds(const ObservableTrace& trace)
{
    std::vector<TechnicalKind> out;
    for (const auto& e : trace)
        out.push_back(e.kind);
    return out;
}

ActionLibrary diamond_library()
{
    return ActionLibrary::parse(R"({"actions": [
      {"id": "a", "name": "a", "category": "malicious", "observability": "invisible",
       "guard": "!adversary.captured_traffic", "effects": ["adversary.captured_traffic = true"],
       "writes": ["adversary.captured_traffic"]},
      {"id": "b", "name": "b", "category": "legitimate", "observability": "invisible",
       "guard": "!adversary.knows_credentials", "effects": ["adversary.knows_credentials = true"],
       "writes": ["adversary.knows_credentials"]},
      {"id": "v", "name": "v", "category": "legitimate", "observability": "visible",
       "guard": "adversary.captured_traffic && adversary.knows_credentials", "effects": [], "writes": [],
       "emits": [{"kind": "log_read"}]}
    ]})");
}

} // namespace

TEST_CASE("matches_prefix")
{
    auto evidence = case_bundle().technical;
    TechnicalEvent opened = evidence[0];
    opened.at = Timestamp{0};
    CHECK(matches_prefix({opened}, evidence));
    CHECK_FALSE(matches_prefix({evidence[1]}, evidence));
    CHECK(matches_prefix({}, evidence));
    CHECK(matches_prefix(evidence, evidence));
}

TEST_CASE("reference incident scenarios")
{
    auto evidence = case_bundle().technical;
    const auto& lib = builtin_actions();
    auto g = reconstruct({case_initial_weak_encryption(), case_initial_plaintext()}, evidence, lib);
    auto list = scenarios_of(g);
    CHECK_FALSE(list.truncated);
    for (const auto* ids : {&s1, &s2}) {
        const auto* w = find_ids(list, *ids);
        REQUIRE(w);
        CHECK(kinds(obs_scenario(*w, lib)) == std::vector<TechnicalKind>{TechnicalKind::session_opened,
                                                                          TechnicalKind::therapy_modified,
                                                                          TechnicalKind::session_closed});
        CHECK(is_malicious(*w, lib));
        CHECK(graph_contains(g, *w));
        CHECK_NOTHROW(w->validate(lib));
    }

    auto weak = scenarios_of(reconstruct(case_initial_weak_encryption(), evidence, lib));
    CHECK(find_ids(weak, s1));
    CHECK(find_ids(weak, s2));
}

TEST_CASE("every returned scenario reproduces the evidence")
{
    auto evidence = case_bundle().technical;
    const auto& lib = builtin_actions();
    auto list = scenarios_of(reconstruct(case_initial_weak_encryption(), evidence, lib));
    REQUIRE(!list.scenarios.empty());
    for (const auto& w : list.scenarios) {
        auto trace = obs_scenario(w, lib);
        REQUIRE(trace.size() == evidence.size());
        for (std::size_t i = 0; i < trace.size(); ++i)
            CHECK(event_matches(trace[i], evidence[i]));
        CHECK_NOTHROW(w.validate(lib));
    }
    CHECK(std::is_sorted(list.scenarios.begin(), list.scenarios.end(), scenario_less));
}

TEST_CASE("empty evidence with an all-visible library")
{
    auto lib = builtin_actions().restricted_to({"open_session", "close_session", "modify_therapy"});
    auto g = reconstruct(WorldState{}, {}, lib);
    auto list = scenarios_of(g);
    REQUIRE(list.scenarios.size() == 1);
    CHECK(list.scenarios[0].actions.empty());
    CHECK(list.scenarios[0].states.size() == 1);
}

TEST_CASE("no consistent scenario gives an empty graph")
{
    TechnicalEvent ev;
    ev.kind = TechnicalKind::firmware_updated;
    ev.fields["version"] = "9";
    auto lib = builtin_actions().restricted_to({"open_session", "close_session"});
    auto g = reconstruct(WorldState{}, {ev}, lib);
    CHECK(g.empty());
    CHECK(scenarios_of(g).scenarios.empty());
}

TEST_CASE("merged diamond yields one path per branch choice")
{
    auto lib = diamond_library();
    TechnicalEvent ev;
    ev.kind = TechnicalKind::log_read;
    auto g = reconstruct(WorldState{}, {ev}, lib);
    auto list = scenarios_of(g);
    REQUIRE(list.scenarios.size() == 2);
    CHECK(list.scenarios[0].action_ids() == std::vector<std::string>{"a", "b", "v"});
    CHECK(list.scenarios[1].action_ids() == std::vector<std::string>{"b", "a", "v"});
    CHECK(g.nodes.size() == 5);
    CHECK_FALSE(is_malicious(Scenario{{WorldState{}}, {}}, lib));
    CHECK(is_malicious(list.scenarios[0], lib));
}

TEST_CASE("truncation")
{
    auto evidence = case_bundle().technical;
    SearchBounds bounds;
    bounds.max_scenarios = 1;
    auto list = scenarios_of(reconstruct(case_initial_weak_encryption(), evidence, builtin_actions(), bounds), bounds);
    CHECK(list.scenarios.size() == 1);
    CHECK(list.truncated);
}

TEST_CASE("physician session is not malicious")
{
    const auto& lib = builtin_actions();
    auto w = physician_session(lib);
    CHECK_NOTHROW(w.validate(lib));
    CHECK_FALSE(is_malicious(w, lib));
}

TEST_CASE("projection depends on actions only")
{
    Rng rng(31);
    const auto& lib = builtin_actions();
    auto list = scenarios_of(reconstruct(case_initial_weak_encryption(), case_bundle().technical, lib));
    for (const auto& w : list.scenarios) {
        auto base = obs_scenario(w, lib);
        auto scrambled = w;
        for (auto& s : scrambled.states)
            s = random_world_state(rng);
        CHECK(obs_scenario(scrambled, lib) == base);
    }
}

TEST_CASE("serialized graphs are deterministic")
{
    auto evidence = case_bundle().technical;
    auto a = reconstruct(case_initial_weak_encryption(), evidence, builtin_actions());
    auto b = reconstruct(case_initial_weak_encryption(), evidence, builtin_actions());
    CHECK(graph_to_json(a).dump() == graph_to_json(b).dump());
    CHECK(graph_to_dot(a) == graph_to_dot(b));
}

TEST_CASE("reconstruction equals the brute-force action-string enumerator")
{
    Rng rng(4242);
    int nonempty = 0;
    for (int round = 0; round < 300; ++round) {
        auto c = random_technical_case(rng);
        CAPTURE(round);
        auto got = scenarios_of(reconstruct(c.initial, c.evidence, c.lib, c.bounds), c.bounds);
        REQUIRE_FALSE(got.truncated);
        auto expected = brute_force_scenarios(c.initial, c.evidence, c.lib, c.bounds);
        CHECK(scenario_keys(got.scenarios) == scenario_keys(expected));
        CHECK(got.scenarios.size() == expected.size());
        nonempty += expected.empty() ? 0 : 1;
    }
    CHECK(nonempty > 50);
}
