// Acceptance checks. One line per criterion; exit status 1 when any fails.

#include "cli.hpp"
#include "fixtures.hpp"
#include "generators.hpp"
#include "oracles.hpp"

#include "imdpm/correlation.hpp"
#include "imdpm/errors.hpp"
#include "imdpm/report.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

using namespace imdpm;
using namespace imdpm::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt_seconds(double s)
{
    std::ostringstream out;
    out.precision(3);
    out << std::fixed << s << " s";
    return out.str();
}

const std::vector<std::string> s1_ids = {"eavesdrop_traffic", "bruteforce_credentials", "open_session",
                                         "read_medical_data", "modify_therapy",         "close_session"};
const std::vector<std::string> s2_ids = {"eavesdrop_traffic", "replay_access",  "open_session",
                                         "read_medical_data", "modify_therapy", "close_session"};

Outcome medical_chain()
{
    auto labeled = labeled_medical_log(case_bundle());
    auto start = std::chrono::steady_clock::now();
    auto scenarios = enumerate_scenarios(infer_tree(labeled, builtin_rules()));
    double elapsed = seconds_since(start);

    int vf = 0;
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < labeled.events.size(); ++i) {
        const auto& e = labeled.events[i];
        vf += e.is_arrhythmia() && e.arrhythmia == ArrhythmiaKind::VF ? 1 : 0;
        if (!e.is_shock())
            all.push_back(i);
    }
    std::vector<std::string> chain{"3"};
    for (int i = 1; i < vf; ++i)
        chain.push_back("1");
    chain.push_back("12");

    bool found = std::any_of(scenarios.begin(), scenarios.end(), [&](const MedicalScenario& m) {
        return m.applications() == chain && m.bound_indices() == all;
    });
    std::ostringstream d;
    d << scenarios.size() << " scenario(s), k=" << vf << ", chain " << (found ? "found" : "missing") << ", "
      << fmt_seconds(elapsed);
    return {found && elapsed < 1.0, d.str()};
}

Outcome technical_scenarios()
{
    const auto& lib = builtin_actions();
    auto evidence = case_bundle().technical;
    auto start = std::chrono::steady_clock::now();
    SearchBounds bounds;
    auto list = scenarios_of(reconstruct({case_initial_weak_encryption(), case_initial_plaintext()}, evidence, lib,
                                         bounds),
                             bounds);
    double elapsed = seconds_since(start);

    const std::vector<TechnicalKind> expected = {TechnicalKind::session_opened, TechnicalKind::therapy_modified,
                                                 TechnicalKind::session_closed};
    auto ok = [&](const std::vector<std::string>& ids) {
        for (const auto& w : list.scenarios) {
            if (w.action_ids() != ids)
                continue;
            std::vector<TechnicalKind> kinds;
            for (const auto& e : obs_scenario(w, lib))
                kinds.push_back(e.kind);
            return kinds == expected && is_malicious(w, lib);
        }
        return false;
    };
    bool s1 = ok(s1_ids);
    bool s2 = ok(s2_ids);
    std::ostringstream d;
    d << list.scenarios.size() << " scenario(s)" << (list.truncated ? " truncated" : "") << ", S1 "
      << (s1 ? "ok" : "missing") << ", S2 " << (s2 ? "ok" : "missing") << ", " << fmt_seconds(elapsed);
    return {s1 && s2 && elapsed < 5.0, d.str()};
}

Outcome correlation()
{
    const auto& lib = builtin_actions();
    auto bundle = case_bundle();
    auto labeled = labeled_medical_log(bundle);
    auto medical = enumerate_scenarios(infer_tree(labeled, builtin_rules())).front();
    auto list = scenarios_of(reconstruct(case_initial_weak_encryption(), bundle.technical, lib));
    const Scenario* s1 = nullptr;
    for (const auto& w : list.scenarios)
        if (w.action_ids() == s1_ids)
            s1 = &w;
    if (!s1)
        return {false, "S1 not reconstructed"};

    auto v = correlate(medical, *s1, lib, bundle.expectation);
    auto all_of_kind = [&](const CorrelationFinding& f, ArrhythmiaKind kind, ResponseLabel label, std::size_t count) {
        return f.cause.action_id == "modify_therapy" && f.responses.size() == count &&
               std::all_of(f.responses.begin(), f.responses.end(), [&](const SuspiciousResponse& r) {
                   return r.event.arrhythmia == kind && r.label == label;
               });
    };
    bool two = v.findings.size() == 2 && all_of_kind(v.findings[0], ArrhythmiaKind::ST, ResponseLabel::IR, 6) &&
               all_of_kind(v.findings[1], ArrhythmiaKind::VF, ResponseLabel::AR, 4);
    auto legit = correlate(medical, physician_session(lib), lib, bundle.expectation);
    std::ostringstream d;
    d << v.findings.size() << " finding(s), verdict " << (v.lethal_attack_proven ? "true" : "false")
      << "; physician session verdict " << (legit.lethal_attack_proven ? "true" : "false");
    return {two && v.lethal_attack_proven && !legit.lethal_attack_proven, d.str()};
}

Outcome round_trip()
{
    Rng rng(20240601);
    int total = 0, passed = 0;
    std::string first_failure;
    while (total < 250) {
        auto lib = random_builtin_subset(rng, 12);
        auto script = random_script(lib, rng, {8, 6, true, true});
        if (script.actions.empty())
            continue;
        ++total;
        auto result = simulate_detailed(script, lib, TherapyExpectation::defaults());
        SearchBounds bounds;
        bounds.max_invisible_run = 8;
        bounds.max_total_steps = 8;
        auto g = reconstruct(result.bundle.initial_state, result.bundle.technical, lib, bounds);
        if (graph_contains(g, result.scenario))
            ++passed;
        else if (first_failure.empty())
            first_failure = script_to_json(script).dump();
    }
    std::ostringstream d;
    d << passed << "/" << total << " scripts recovered";
    if (!first_failure.empty())
        d << "; first failure " << first_failure;
    return {passed == total, d.str()};
}

Outcome technical_oracle()
{
    Rng rng(77);
    int total = 300, passed = 0, nonempty = 0;
    for (int i = 0; i < total; ++i) {
        auto c = random_technical_case(rng, 5, 3);
        auto got = scenarios_of(reconstruct(c.initial, c.evidence, c.lib, c.bounds), c.bounds);
        auto expected = brute_force_scenarios(c.initial, c.evidence, c.lib, c.bounds);
        nonempty += expected.empty() ? 0 : 1;
        if (!got.truncated && scenario_keys(got.scenarios) == scenario_keys(expected) &&
            got.scenarios.size() == expected.size())
            ++passed;
    }
    std::ostringstream d;
    d << passed << "/" << total << " instances equal (" << nonempty << " with accepting scenarios)";
    return {passed == total, d.str()};
}

Outcome medical_oracle()
{
    Rng rng(31337);
    int total = 500, passed = 0;
    std::size_t branches = 0;
    for (int i = 0; i < total; ++i) {
        auto c = random_medical_case(rng, 6, 4);
        auto got = branches_of(enumerate_scenarios(infer_tree(c.log, c.rules, c.cfg)));
        auto expected = brute_force_branches(c.log, c.rules, c.cfg);
        branches += expected.size();
        passed += got == expected ? 1 : 0;
    }
    std::ostringstream d;
    d << passed << "/" << total << " logs equal (" << branches << " branches)";
    return {passed == total, d.str()};
}

Outcome invariants()
{
    const auto& lib = builtin_actions();
    std::vector<std::string> broken;

    // Invisible actions never emit, and projections ignore states.
    Rng rng(101);
    int silent_checks = 0;
    for (int i = 0; i < 1000; ++i) {
        auto s = random_world_state(rng);
        for (const auto& a : lib.actions()) {
            if (a.visible())
                continue;
            for (const auto& inst : hypothesize(a, s)) {
                if (!enabled(a, s, inst.bindings))
                    continue;
                auto r = apply(a, s, inst.bindings);
                Scenario w{{s, r.state}, {inst}};
                Scenario scrambled{{random_world_state(rng), random_world_state(rng)}, {inst}};
                ++silent_checks;
                if (!r.emitted.empty() || !obs_scenario(w, lib).empty() || !obs_scenario(scrambled, lib).empty())
                    broken.push_back("invisible action " + a.id + " emitted events");
            }
        }
    }

    // Builtin effects stay inside their declared write-sets.
    int frame_checks = 0;
    for (int i = 0; i < 1000; ++i) {
        auto s = random_world_state(rng);
        for (const auto& a : lib.actions()) {
            auto b = random_bindings(a, s, rng);
            if (!enabled(a, s, b))
                continue;
            ++frame_checks;
            for (const auto& path : changed_fields(s, apply(a, s, b).state))
                if (!a.writes_field(path))
                    broken.push_back(a.id + " wrote " + path);
        }
    }

    // No shock window ever holds more shocks than the budget.
    auto attack_lib = lib.restricted_to({"eavesdrop_traffic", "extract_credentials", "bruteforce_credentials",
                                         "replay_access", "open_session", "read_medical_data", "modify_therapy",
                                         "command_shock", "disable_therapy", "close_session"});
    for (int i = 0; i < 300; ++i) {
        auto script = random_script(attack_lib, rng, {8, 25, false, false});
        auto bundle = simulate(script, attack_lib, TherapyExpectation::defaults());
        std::vector<Timestamp> shocks;
        for (const auto& e : bundle.medical.events)
            if (e.is_shock())
                shocks.push_back(e.at);
        const auto& therapy = script.initial_state.imd.therapy;
        for (auto start : shocks) {
            auto count = std::count_if(shocks.begin(), shocks.end(), [&](Timestamp t) {
                return t >= start && (t - start).millis < therapy.shock_window_ms;
            });
            if (count > therapy.max_shocks)
                broken.push_back("shock budget exceeded at t=" + std::to_string(start.millis));
        }
    }

    // Confirmed findings only cover responses the original settings answer correctly.
    int confirmed = 0;
    auto expectation = TherapyExpectation::defaults();
    for (int i = 0; i < 200; ++i) {
        auto script = random_script(attack_lib, rng, {8, 12, true, false});
        std::int64_t end = 0;
        for (const auto& a : script.actions)
            end = std::max(end, a.at.millis);
        for (const auto& s : script.stimuli)
            end = std::max(end, s.at.millis);
        script.heart_death = Timestamp{end + 60'000};
        auto result = simulate_detailed(script, attack_lib, expectation);
        const auto& log = result.bundle.medical;
        MedicalScenario m;
        for (std::size_t k = 0; k < log.events.size(); ++k) {
            const auto& e = log.events[k];
            if (e.is_arrhythmia())
                m.steps.push_back({EventPattern::labeled(e.arrhythmia, *e.label), k, e, std::string("r"), 0});
            else if (e.is_heart_death())
                m.steps.push_back({EventPattern::heart_death(), k, e, std::nullopt, 0});
        }
        CorrelationOptions options;
        options.stimuli = stimuli_from(log);
        auto v = correlate(m, result.scenario, attack_lib, expectation, CausalTable::builtin(), options);
        auto replay = counterfactual_replay(*options.stimuli, result.scenario.states.front().imd, expectation);
        for (const auto& f : v.findings) {
            if (f.grade != FindingGrade::counterfactual_confirmed)
                continue;
            ++confirmed;
            for (const auto& r : f.responses) {
                auto same = std::find_if(replay.events.begin(), replay.events.end(), [&](const MedicalEvent& e) {
                    return e.is_arrhythmia() && e.at == r.event.at && e.arrhythmia == r.event.arrhythmia;
                });
                if (same == replay.events.end() || same->label != ResponseLabel::OK)
                    broken.push_back("confirmed finding for a response the replay does not fix");
            }
        }
    }

    std::ostringstream d;
    d << silent_checks << " silence, " << frame_checks << " frame, 300 budget, 200 counterfactual checks ("
      << confirmed << " confirmed findings)";
    if (!broken.empty())
        d << "; first violation: " << broken.front();
    return {broken.empty() && confirmed > 0, d.str()};
}

Outcome determinism()
{
    auto make_dir = [](const std::string& tag) {
        std::string pattern = (fs::temp_directory_path() / ("imdpm-acceptance-" + tag + "-XXXXXX")).string();
        if (!mkdtemp(pattern.data()))
            throw Error("cannot create a temporary directory");
        return fs::path(pattern);
    };
    auto a = make_dir("a");
    auto b = make_dir("b");
    auto evidence = data_path("reference_incident/evidence.json");
    std::ostringstream sink;
    auto invoke = [&](const fs::path& out) {
        std::vector<std::string> args = {"imdpm", "investigate", "--evidence", evidence, "--out", out.string()};
        std::vector<const char*> argv;
        for (const auto& s : args)
            argv.push_back(s.c_str());
        return cli::run(static_cast<int>(argv.size()), argv.data(), sink, sink);
    };
    int ca = invoke(a);
    int cb = invoke(b);
    std::size_t files = 0, identical = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        ++files;
        auto other = b / entry.path().filename();
        if (fs::exists(other) && read_text(entry.path().string()) == read_text(other.string()))
            ++identical;
    }
    fs::remove_all(a);
    fs::remove_all(b);
    std::ostringstream d;
    d << identical << "/" << files << " report files identical, exit codes " << ca << " and " << cb;
    return {ca == 0 && cb == 0 && files > 0 && identical == files, d.str()};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"medical inference on the reference incident", medical_chain},
        {"technical reconstruction on the reference incident", technical_scenarios},
        {"correlation on the reference incident", correlation},
        {"simulate/reconstruct round trip", round_trip},
        {"reconstruction equals brute-force enumeration", technical_oracle},
        {"medical inference equals brute-force enumeration", medical_oracle},
        {"invariant suites", invariants},
        {"deterministic investigate reports", determinism},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
                  << " (" << o.detail << ")" << std::endl;
    }
    return all ? 0 : 1;
}
