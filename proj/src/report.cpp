#include "imdpm/report.hpp"

#include "imdpm/errors.hpp"

#include <algorithm>
#include <sstream>

namespace imdpm {

using nlohmann::json;

MedicalLog labeled_medical_log(const EvidenceBundle& bundle)
{
    bool all_labeled = std::all_of(bundle.medical.events.begin(), bundle.medical.events.end(),
                                   [](const MedicalEvent& ev) { return !ev.is_arrhythmia() || ev.label; });
    if (all_labeled)
        return bundle.medical;
    return classify_responses(bundle.medical, bundle.expectation);
}

json medical_scenarios_to_json(const std::vector<MedicalScenario>& scenarios)
{
    json list = json::array();
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        json j = scenario_to_json(scenarios[i]);
        j["id"] = "medical-" + std::to_string(i + 1);
        list.push_back(j);
    }
    return {{"scenarios", list}};
}

std::vector<MedicalScenario> medical_scenarios_from_json(const json& j, const MedicalLog& labeled)
{
    std::vector<MedicalScenario> out;
    try {
        for (const auto& item : j.at("scenarios")) {
            MedicalScenario m;
            for (const auto& s : item.at("steps")) {
                ScenarioStep step;
                step.pattern = parse_pattern(s.at("pattern").get<std::string>());
                if (!s.at("rule").is_null())
                    step.rule_id = s.at("rule").get<std::string>();
                step.slot = s.value("slot", 0);
                if (s.contains("index")) {
                    auto index = s.at("index").get<std::size_t>();
                    if (index >= labeled.events.size())
                        throw ValidationError("medical scenario step points past the end of the log");
                    const auto& ev = labeled.events[index];
                    bool fits = step.pattern.matches(ev) && ev.at.millis == s.value("t_ms", ev.at.millis);
                    if (!fits)
                        throw ValidationError("medical scenario step " + s.dump() + " does not match " + describe(ev));
                    step.binding = index;
                    step.event = ev;
                }
                m.steps.push_back(std::move(step));
            }
            out.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("medical scenarios: ") + e.what());
    }
    return out;
}

json technical_scenarios_to_json(const ScenarioList& list, const ActionLibrary& lib)
{
    json scenarios = json::array();
    for (std::size_t i = 0; i < list.scenarios.size(); ++i) {
        const auto& w = list.scenarios[i];
        json j = scenario_to_json(w, lib);
        j["id"] = "technical-" + std::to_string(i + 1);
        j["initial_state"] = w.states.front();
        scenarios.push_back(j);
    }
    return {{"truncated", list.truncated}, {"count", list.scenarios.size()}, {"scenarios", scenarios}};
}

ScenarioList technical_scenarios_from_json(const json& j, const ActionLibrary& lib)
{
    ScenarioList list;
    try {
        list.truncated = j.value("truncated", false);
        for (const auto& item : j.at("scenarios")) {
            Scenario w;
            w.states.push_back(item.at("initial_state").get<WorldState>());
            for (const auto& a : item.at("actions")) {
                auto inst = instance_from_json(a);
                const auto* def = lib.find(inst.action_id);
                if (!def)
                    throw ValidationError("technical scenario uses unknown action '" + inst.action_id + "'");
                w.states.push_back(apply(*def, w.states.back(), inst.bindings).state);
                w.actions.push_back(std::move(inst));
            }
            list.scenarios.push_back(std::move(w));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("technical scenarios: ") + e.what());
    }
    return list;
}

CorrelationReport correlate_all(const std::vector<MedicalScenario>& medical, const ScenarioList& technical,
                                const MedicalLog& labeled, const ActionLibrary& lib,
                                const TherapyExpectation& expectation, const CausalTable& table)
{
    CorrelationReport report;
    CorrelationOptions options;
    options.stimuli = stimuli_from(labeled);

    bool all_uncorrelatable = !medical.empty();
    for (const auto& m : medical)
        if (m.start())
            all_uncorrelatable = false;

    bool proven = false;
    for (std::size_t t = 0; t < technical.scenarios.size(); ++t) {
        for (std::size_t i = 0; i < medical.size(); ++i) {
            auto v = correlate(medical[i], technical.scenarios[t], lib, expectation, table, options);
            proven = proven || v.lethal_attack_proven;
            report.pairs.push_back({i, t, std::move(v)});
        }
    }
    if (proven)
        report.status = VerdictStatus::proven;
    else if (all_uncorrelatable)
        report.status = VerdictStatus::uncorrelatable;
    else
        report.status = VerdictStatus::not_proven;
    return report;
}

json correlation_report_json(const CorrelationReport& report, const std::vector<MedicalScenario>& medical,
                             const ScenarioList& technical)
{
    json groups = json::array();
    for (std::size_t t = 0; t < technical.scenarios.size(); ++t) {
        json pairs = json::array();
        for (const auto& p : report.pairs) {
            if (p.technical != t)
                continue;
            json j = verdict_to_json(p.verdict);
            j["medical_scenario"] = "medical-" + std::to_string(p.medical + 1);
            pairs.push_back(j);
        }
        groups.push_back({{"technical_scenario", "technical-" + std::to_string(t + 1)},
                          {"actions", technical.scenarios[t].action_ids()},
                          {"verdicts", pairs}});
    }
    std::size_t proven_pairs = std::count_if(report.pairs.begin(), report.pairs.end(),
                                             [](const PairVerdict& p) { return p.verdict.lethal_attack_proven; });
    return {{"status", std::string(to_string(report.status))},
            {"lethal_attack_proven", report.status == VerdictStatus::proven},
            {"medical_scenarios", medical.size()},
            {"technical_scenarios", technical.scenarios.size()},
            {"technical_truncated", technical.truncated},
            {"proven_pairs", proven_pairs},
            {"by_technical_scenario", groups}};
}

std::string correlation_report_text(const CorrelationReport& report, const std::vector<MedicalScenario>& medical,
                                    const ScenarioList& technical)
{
    std::ostringstream out;
    out << "Verdict: " << to_string(report.status) << "\n";
    out << "Medical scenarios: " << medical.size() << "\n";
    out << "Technical scenarios: " << technical.scenarios.size() << (technical.truncated ? " (truncated)" : "")
        << "\n";
    for (std::size_t t = 0; t < technical.scenarios.size(); ++t) {
        out << "\ntechnical-" << (t + 1) << ":";
        for (const auto& a : technical.scenarios[t].actions)
            out << " " << a.action_id;
        out << "\n";
        for (const auto& p : report.pairs) {
            if (p.technical != t)
                continue;
            out << "  against medical-" << (p.medical + 1) << ": " << to_string(p.verdict.status) << "\n";
            for (const auto& line : p.verdict.narrative)
                out << "    " << line << "\n";
        }
    }
    return out.str();
}

InvestigationResult investigate(const EvidenceBundle& bundle, const InvestigationInputs& inputs)
{
    InvestigationResult r;
    r.labeled = labeled_medical_log(bundle);
    r.tree = infer_tree(r.labeled, inputs.rules, inputs.inference);
    r.medical = enumerate_scenarios(r.tree);
    auto initials = inputs.initial_states.empty() ? std::vector<WorldState>{bundle.initial_state}
                                                  : inputs.initial_states;
    r.graph = reconstruct(initials, bundle.technical, inputs.actions, inputs.bounds);
    r.technical = scenarios_of(r.graph, inputs.bounds);
    r.correlation = correlate_all(r.medical, r.technical, r.labeled, inputs.actions, bundle.expectation,
                                  inputs.causal_table);
    return r;
}

} // namespace imdpm
