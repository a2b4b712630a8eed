#include "imdpm/simulator.hpp"

#include "imdpm/errors.hpp"

#include <algorithm>

namespace imdpm {

using nlohmann::json;

void ScenarioScript::validate(const ActionLibrary& lib) const
{
    initial_state.validate();
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (!lib.contains(actions[i].action_id))
            throw ValidationError("script references unknown action '" + actions[i].action_id + "'");
        if (i > 0 && actions[i].at < actions[i - 1].at)
            throw ValidationError("script actions are not sorted by time");
    }
    for (std::size_t i = 1; i < stimuli.size(); ++i)
        if (stimuli[i].at < stimuli[i - 1].at)
            throw ValidationError("script stimuli are not sorted by time");
    if (heart_death) {
        bool late = std::any_of(actions.begin(), actions.end(), [&](const auto& a) { return a.at > *heart_death; }) ||
                    std::any_of(stimuli.begin(), stimuli.end(), [&](const auto& s) { return s.at >= *heart_death; });
        if (late)
            throw ValidationError("script heart death must come after every action and stimulus");
    }
}

ScenarioScript parse_script(std::string_view text)
{
    json doc = parse_json_document(text, "script");
    ScenarioScript script;
    try {
        if (doc.contains("initial_state"))
            script.initial_state = doc.at("initial_state").get<WorldState>();
        for (const auto& a : doc.value("actions", json::array())) {
            ScriptedAction act;
            act.at = Timestamp{a.at("t_ms").get<std::int64_t>()};
            act.action_id = a.at("action").get<std::string>();
            const json params = a.value("params", json::object());
            const json changes = a.value("changes", json::object());
            for (const auto& [name, value] : params.items())
                act.params[name] = value.is_string() ? value.get<std::string>() : value.dump();
            for (const auto& [name, value] : changes.items())
                act.changes[name] = value.get<double>();
            script.actions.push_back(std::move(act));
        }
        for (const auto& s : doc.value("stimuli", json::array())) {
            Stimulus st;
            st.at = Timestamp{s.at("t_ms").get<std::int64_t>()};
            st.arrhythmia = parse_arrhythmia(s.at("arrhythmia").get<std::string>());
            if (s.contains("rate_bpm"))
                st.rate_bpm = s.at("rate_bpm").get<int>();
            script.stimuli.push_back(st);
        }
        if (doc.contains("heart_death_ms"))
            script.heart_death = Timestamp{doc.at("heart_death_ms").get<std::int64_t>()};
        if (doc.contains("expectation"))
            script.expectation = doc.at("expectation").get<TherapyExpectation>();
        if (doc.contains("meta")) {
            const auto& meta = doc.at("meta");
            script.meta.case_id = meta.value("case_id", std::string());
            script.meta.collected_at = meta.value("collected_at", std::string());
            if (meta.contains("notes"))
                script.meta.notes = meta.at("notes").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("script: ") + e.what());
    }
    return script;
}

json script_to_json(const ScenarioScript& script)
{
    json actions = json::array();
    for (const auto& a : script.actions) {
        json j = {{"t_ms", a.at.millis}, {"action", a.action_id}};
        if (!a.params.empty())
            j["params"] = a.params;
        if (!a.changes.empty())
            j["changes"] = a.changes;
        actions.push_back(j);
    }
    json stimuli = json::array();
    for (const auto& s : script.stimuli) {
        json j = {{"t_ms", s.at.millis}, {"arrhythmia", std::string(to_string(s.arrhythmia))}};
        if (s.rate_bpm)
            j["rate_bpm"] = *s.rate_bpm;
        stimuli.push_back(j);
    }
    json doc = {{"initial_state", script.initial_state}, {"actions", actions}, {"stimuli", stimuli}};
    if (script.heart_death)
        doc["heart_death_ms"] = script.heart_death->millis;
    if (script.expectation)
        doc["expectation"] = *script.expectation;
    doc["meta"] = {{"case_id", script.meta.case_id},
                   {"collected_at", script.meta.collected_at},
                   {"notes", script.meta.notes}};
    return doc;
}

int TherapyRuntime::shocks_in_window(Timestamp now, const TherapySettings& settings) const
{
    return static_cast<int>(std::count_if(shocks.begin(), shocks.end(), [&](Timestamp t) {
        return t <= now && (now - t).millis < settings.shock_window_ms;
    }));
}

bool TherapyRuntime::budget_available(Timestamp now, const TherapySettings& settings) const
{
    if (deactivated_until && now < *deactivated_until)
        return false;
    // Every window that would hold `now` must stay within budget.
    auto fits_from = [&](Timestamp start) {
        auto count = std::count_if(shocks.begin(), shocks.end(), [&](Timestamp t) {
            return t >= start && (t - start).millis < settings.shock_window_ms;
        });
        return count < settings.max_shocks;
    };
    if (!fits_from(now))
        return false;
    for (auto start : shocks)
        if (start <= now && (now - start).millis < settings.shock_window_ms && !fits_from(start))
            return false;
    return true;
}

void TherapyRuntime::record_shock(Timestamp at, const TherapySettings& settings, const ResponseModel& model)
{
    shocks.push_back(at);
    if (shocks_in_window(at, settings) >= settings.max_shocks)
        deactivated_until = at + model.deactivation.value_or(Duration{settings.shock_window_ms});
}

std::optional<MedicalEvent> imd_response(const MedicalEvent& stimulus, const ImdState& imd, TherapyRuntime& runtime,
                                         const ResponseModel& model)
{
    if (!stimulus.is_arrhythmia() || !imd.enabled)
        return std::nullopt;
    Timestamp at = stimulus.at + model.latency;
    if (!runtime.budget_available(at, imd.therapy))
        return std::nullopt;
    auto energy = imd.therapy.shock_for(stimulus.effective_rate_bpm());
    if (!energy)
        return std::nullopt;
    runtime.record_shock(at, imd.therapy, model);
    return MedicalEvent::make_shock(at, *energy);
}

namespace {

FieldType param_type(const ActionDef& def, const std::string& param)
{
    for (const auto& tpl : def.emits)
        for (const auto& [field, value] : tpl.fields)
            if (value == "$" + param)
                for (const auto& spec : payload_schema(tpl.kind))
                    if (spec.name == field)
                        return spec.type;
    return FieldType::text;
}

double numeric(const FieldValue& v)
{
    if (std::holds_alternative<double>(v))
        return std::get<double>(v);
    if (std::holds_alternative<std::int64_t>(v))
        return static_cast<double>(std::get<std::int64_t>(v));
    throw ValidationError("therapy parameter is not numeric");
}

expr::Bindings bindings_for(const ScriptedAction& a, const ActionDef& def, const WorldState& s)
{
    expr::Bindings b;
    for (const auto& [name, value] : a.params)
        b.params[name] = canonical_field_text(param_type(def, name), value);
    for (const auto& [name, new_value] : a.changes)
        b.changes[name] = ParamChange{numeric(get_field(s, "imd.therapy." + name)), new_value};
    if (def.visible())
        b.at = a.at;
    return b;
}

} // namespace

SimulationResult simulate_detailed(const ScenarioScript& script, const ActionLibrary& lib,
                                   const TherapyExpectation& expectation, const ResponseModel& model)
{
    script.validate(lib);
    SimulationResult result;
    auto& bundle = result.bundle;
    bundle.initial_state = script.initial_state;
    bundle.expectation = expectation;
    bundle.meta = script.meta;

    WorldState state = script.initial_state;
    result.scenario.states.push_back(state);
    TherapyRuntime runtime;
    std::vector<MedicalEvent> medical;

    std::size_t ai = 0;
    std::size_t si = 0;
    while (ai < script.actions.size() || si < script.stimuli.size()) {
        bool take_action =
            ai < script.actions.size() && (si >= script.stimuli.size() || script.actions[ai].at <= script.stimuli[si].at);
        if (take_action) {
            const auto& scripted = script.actions[ai++];
            const auto& def = lib.at(scripted.action_id);
            auto bindings = bindings_for(scripted, def, state);
            if (!enabled(def, state, bindings))
                throw GuardError("scripted action " + def.id + " at t_ms=" + std::to_string(scripted.at.millis) +
                                 " is not enabled: guard \"" + def.guard.source() + "\" is false");
            auto applied = apply(def, state, bindings);
            for (auto& ev : applied.emitted) {
                if (ev.kind == TechnicalKind::shock_commanded && state.imd.enabled &&
                    runtime.budget_available(scripted.at, state.imd.therapy)) {
                    double energy = std::stod(ev.field("energy_j"));
                    if (energy > 0.0) {
                        runtime.record_shock(scripted.at, state.imd.therapy, model);
                        medical.push_back(MedicalEvent::make_shock(scripted.at, energy));
                    }
                }
                bundle.technical.push_back(std::move(ev));
            }
            state = std::move(applied.state);
            result.scenario.actions.push_back(ActionInstance{def.id, bindings});
            result.scenario.states.push_back(state);
        } else {
            const auto& stim = script.stimuli[si++];
            auto ev = MedicalEvent::make_arrhythmia(stim.at, stim.arrhythmia);
            ev.rate_bpm = stim.rate_bpm.value_or(nominal_rate_bpm(stim.arrhythmia));
            medical.push_back(ev);
            if (auto shock = imd_response(ev, state.imd, runtime, model))
                medical.push_back(*shock);
        }
    }
    if (script.heart_death)
        medical.push_back(MedicalEvent::make_heart_death(*script.heart_death));

    bundle.technical = normalize_technical_log(std::move(bundle.technical));
    bundle.medical = classify_responses(MedicalLog::from_events(std::move(medical)), expectation);
    return result;
}

EvidenceBundle simulate(const ScenarioScript& script, const ActionLibrary& lib, const TherapyExpectation& expectation,
                        const ResponseModel& model)
{
    return simulate_detailed(script, lib, expectation, model).bundle;
}

MedicalLog counterfactual_replay(const StimulusTimeline& stimuli, const ImdState& settings,
                                 const TherapyExpectation& expectation, const ResponseModel& model)
{
    TherapyRuntime runtime;
    std::vector<MedicalEvent> events;
    for (const auto& stim : stimuli) {
        auto ev = MedicalEvent::make_arrhythmia(stim.at, stim.arrhythmia);
        ev.rate_bpm = stim.rate_bpm.value_or(nominal_rate_bpm(stim.arrhythmia));
        events.push_back(ev);
        if (auto shock = imd_response(ev, settings, runtime, model))
            events.push_back(*shock);
    }
    return classify_responses(MedicalLog::from_events(std::move(events)), expectation);
}

StimulusTimeline stimuli_from(const MedicalLog& log)
{
    StimulusTimeline out;
    for (const auto& ev : log.events)
        if (ev.is_arrhythmia())
            out.push_back({ev.at, ev.arrhythmia, ev.rate_bpm});
    return out;
}

} // namespace imdpm
