#include "imdpm/correlation.hpp"

#include "imdpm/errors.hpp"
#include "imdpm/evidence.hpp"
#include "resources.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace imdpm {

using nlohmann::json;

namespace {

constexpr std::pair<EffectKind, std::string_view> effect_names[] = {
    {EffectKind::therapy_thresholds_changed, "TherapyThresholdsChanged"},
    {EffectKind::therapy_disabled, "TherapyDisabled"},
    {EffectKind::shock_budget_consumed, "ShockBudgetConsumed"},
    {EffectKind::clock_changed, "ClockChanged"},
    {EffectKind::firmware_changed, "FirmwareChanged"},
    {EffectKind::battery_drained, "BatteryDrained"},
};

std::optional<EffectKind> effect_of(const std::string& path, const FieldValue& before, const FieldValue& after)
{
    if (path_covered_by(path, "imd.therapy"))
        return EffectKind::therapy_thresholds_changed;
    if (path == "imd.enabled")
        return std::get<bool>(after) ? std::nullopt : std::optional(EffectKind::therapy_disabled);
    if (path == "imd.shock_budget_used")
        return EffectKind::shock_budget_consumed;
    if (path == "imd.clock_offset_ms")
        return EffectKind::clock_changed;
    if (path == "imd.firmware")
        return EffectKind::firmware_changed;
    if (path == "imd.battery")
        return std::get<std::int64_t>(after) < std::get<std::int64_t>(before) ? std::optional(EffectKind::battery_drained)
                                                                              : std::nullopt;
    return std::nullopt;
}

// Effects whose link can be tested by replaying the stimuli on the
// pre-attack device.
bool replayable(EffectKind kind)
{
    return kind == EffectKind::therapy_thresholds_changed || kind == EffectKind::therapy_disabled ||
           kind == EffectKind::shock_budget_consumed;
}

json field_json(const FieldValue& v)
{
    return std::visit([](const auto& x) { return json(x); }, v);
}

std::string time_text(std::optional<Timestamp> t)
{
    return t ? "t=" + std::to_string(t->millis) : std::string("t=?");
}

} // namespace

std::string_view to_string(EffectKind kind)
{
    for (const auto& [k, name] : effect_names)
        if (k == kind)
            return name;
    return "?";
}

EffectKind parse_effect_kind(std::string_view token)
{
    for (const auto& [k, name] : effect_names)
        if (name == token)
            return k;
    throw ValidationError("unknown effect kind '" + std::string(token) + "'");
}

std::string_view to_string(FindingGrade g)
{
    return g == FindingGrade::counterfactual_confirmed ? "counterfactual-confirmed" : "table-linked";
}

std::string_view to_string(VerdictStatus s)
{
    switch (s) {
    case VerdictStatus::proven: return "proven";
    case VerdictStatus::not_proven: return "not_proven";
    case VerdictStatus::uncorrelatable: return "uncorrelatable";
    }
    return "?";
}

CausalTable CausalTable::parse(std::string_view text)
{
    json doc = parse_json_document(text, "causal table");
    CausalTable table;
    std::set<std::string> ids;
    try {
        for (const auto& j : doc.at("links")) {
            CausalLink link;
            link.id = j.at("id").get<std::string>();
            link.effect = parse_effect_kind(j.at("effect").get<std::string>());
            link.response = parse_label(j.at("response").get<std::string>());
            auto scope = j.value("scope", std::string("any"));
            if (scope == "any")
                link.scope = LinkScope::any;
            else if (scope == "affected_kinds")
                link.scope = LinkScope::affected_kinds;
            else
                throw ValidationError("causal link " + link.id + ": unknown scope '" + scope + "'");
            link.description = j.value("description", std::string());
            if (link.response == ResponseLabel::OK)
                throw ValidationError("causal link " + link.id + " must explain IR or AR");
            if (!ids.insert(link.id).second)
                throw ValidationError("duplicate causal link id '" + link.id + "'");
            table.links.push_back(std::move(link));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("causal table: ") + e.what());
    }
    return table;
}

std::string_view CausalTable::builtin_text()
{
    return resources::causal_table_json;
}

const CausalTable& CausalTable::builtin()
{
    static const CausalTable table = parse(builtin_text());
    return table;
}

std::vector<SuspiciousResponse> suspicious_responses(const MedicalScenario& m)
{
    std::vector<SuspiciousResponse> out;
    for (std::size_t i = 0; i < m.steps.size(); ++i) {
        const auto& step = m.steps[i];
        if (!step.event || !step.event->is_arrhythmia() || !step.event->label)
            continue;
        if (*step.event->label == ResponseLabel::OK)
            continue;
        out.push_back({i, *step.binding, *step.event, *step.event->label});
    }
    return out;
}

std::vector<MaliciousEffect> malicious_effects(const Scenario& w, const ActionLibrary& lib)
{
    std::vector<MaliciousEffect> out;
    std::optional<Timestamp> last_visible;
    for (std::size_t i = 0; i < w.actions.size(); ++i) {
        const auto& inst = w.actions[i];
        const auto& def = lib.at(inst.action_id);
        if (def.visible() && inst.bindings.at)
            last_visible = inst.bindings.at;
        if (!def.malicious())
            continue;
        auto before = flatten(w.states[i]);
        auto after = flatten(w.states[i + 1]);
        std::map<EffectKind, std::map<std::string, FieldDelta>> by_kind;
        for (const auto& path : changed_fields(w.states[i], w.states[i + 1])) {
            if (!before.contains(path) || !after.contains(path))
                continue;
            if (auto kind = effect_of(path, before.at(path), after.at(path)))
                by_kind[*kind][path] = FieldDelta{before.at(path), after.at(path)};
        }
        for (auto& [kind, delta] : by_kind) {
            auto existing = std::find_if(out.begin(), out.end(), [&](const MaliciousEffect& e) {
                return e.kind == kind && e.action_id == inst.action_id;
            });
            if (existing == out.end()) {
                MaliciousEffect e;
                e.kind = kind;
                e.action_id = inst.action_id;
                e.steps = {i};
                e.at = def.visible() ? inst.bindings.at : last_visible;
                e.delta = std::move(delta);
                e.before = w.states[i].imd;
                e.after = w.states[i + 1].imd;
                out.push_back(std::move(e));
            } else {
                existing->steps.push_back(i);
                for (auto& [path, d] : delta) {
                    auto [it, inserted] = existing->delta.emplace(path, d);
                    if (!inserted)
                        it->second.after = d.after;
                }
                existing->after = w.states[i + 1].imd;
            }
        }
    }
    return out;
}

bool settings_affect(const TherapySettings& before, const TherapySettings& after, const MedicalEvent& ev)
{
    int rate = ev.effective_rate_bpm();
    return before.detect(rate) != after.detect(rate) || before.shock_for(rate) != after.shock_for(rate);
}

Verdict correlate(const MedicalScenario& m, const Scenario& w, const ActionLibrary& lib,
                  const TherapyExpectation& expectation, const CausalTable& table, const CorrelationOptions& options)
{
    Verdict v;
    if (m.steps.empty() || !m.steps.back().event || !m.steps.back().event->is_heart_death())
        throw ValidationError("medical scenario must end in a bound heart death");
    Timestamp hd = m.steps.back().event->at;

    auto effects = malicious_effects(w, lib);
    for (const auto& e : effects)
        if (e.at && *e.at > hd)
            throw TimelineError(std::string(to_string(e.kind)) + " from " + e.action_id + " at t_ms=" +
                                std::to_string(e.at->millis) + " postdates the heart death at t_ms=" +
                                std::to_string(hd.millis));

    if (!m.start()) {
        v.status = VerdictStatus::uncorrelatable;
        v.narrative.push_back("The medical scenario binds no recorded arrhythmia; nothing to correlate.");
        return v;
    }

    auto responses = suspicious_responses(m);

    StimulusTimeline stimuli = options.stimuli.value_or(StimulusTimeline{});
    if (!options.stimuli)
        for (const auto& ev : m.bound_events())
            if (ev.is_arrhythmia())
                stimuli.push_back({ev.at, ev.arrhythmia, ev.rate_bpm});
    std::stable_sort(stimuli.begin(), stimuli.end(), [](const Stimulus& a, const Stimulus& b) { return a.at < b.at; });
    auto replay = counterfactual_replay(stimuli, w.states.front().imd, expectation, options.model);
    auto replayed_ok = [&](const MedicalEvent& ev) {
        for (const auto& r : replay.events)
            if (r.is_arrhythmia() && r.at == ev.at && r.arrhythmia == ev.arrhythmia)
                return r.label == ResponseLabel::OK;
        return false;
    };

    for (const auto& effect : effects) {
        for (const auto& link : table.links) {
            if (link.effect != effect.kind)
                continue;
            CorrelationFinding f{effect, {}, link.id, FindingGrade::table_linked};
            for (const auto& r : responses) {
                if (r.label != link.response)
                    continue;
                if (effect.at && *effect.at > r.event.at)
                    continue;
                if (link.scope == LinkScope::affected_kinds &&
                    !settings_affect(effect.before.therapy, effect.after.therapy, r.event))
                    continue;
                f.responses.push_back(r);
            }
            if (f.responses.empty())
                continue;
            if (replayable(effect.kind) &&
                std::all_of(f.responses.begin(), f.responses.end(),
                            [&](const SuspiciousResponse& r) { return replayed_ok(r.event); }))
                f.grade = FindingGrade::counterfactual_confirmed;
            v.findings.push_back(std::move(f));
        }
    }

    v.lethal_attack_proven = !v.findings.empty();
    v.status = v.lethal_attack_proven ? VerdictStatus::proven : VerdictStatus::not_proven;

    struct Line
    {
        std::int64_t at;
        int order;
        std::string text;
    };
    std::vector<Line> lines;
    for (const auto& effect : effects) {
        std::ostringstream out;
        out << time_text(effect.at) << " " << effect.action_id << " (malicious): " << to_string(effect.kind);
        for (const auto& [path, d] : effect.delta)
            out << "; " << path << " " << render(d.before) << " -> " << render(d.after);
        lines.push_back({effect.at ? effect.at->millis : -1, 0, out.str()});
    }
    for (const auto& f : v.findings) {
        std::ostringstream out;
        const auto& first = f.responses.front().event;
        const auto& last = f.responses.back().event;
        out << "t=" << first.at.millis;
        if (last.at != first.at)
            out << ".." << last.at.millis;
        out << " " << f.responses.size() << " suspicious response" << (f.responses.size() == 1 ? "" : "s") << " (";
        for (std::size_t i = 0; i < f.responses.size(); ++i)
            out << (i ? ", " : "") << describe(f.responses[i].event);
        out << ") explained by " << to_string(f.cause.kind) << " from " << f.cause.action_id << " via link "
            << f.link_id << " [" << to_string(f.grade) << "]";
        lines.push_back({first.at.millis, 1, out.str()});
    }
    lines.push_back({hd.millis, 2, "t=" + std::to_string(hd.millis) + " heart death"});
    std::stable_sort(lines.begin(), lines.end(),
                     [](const Line& a, const Line& b) { return std::tie(a.at, a.order) < std::tie(b.at, b.order); });
    for (auto& l : lines)
        v.narrative.push_back(std::move(l.text));
    if (v.lethal_attack_proven)
        v.narrative.push_back("Verdict: the malicious actions above account for the suspicious device responses "
                              "leading to the heart death.");
    else if (responses.empty())
        v.narrative.push_back("Verdict: the medical scenario shows no suspicious device response.");
    else
        v.narrative.push_back("Verdict: no malicious effect explains the suspicious device responses.");
    return v;
}

json effect_to_json(const MaliciousEffect& e)
{
    json delta = json::object();
    for (const auto& [path, d] : e.delta)
        delta[path] = {{"before", field_json(d.before)}, {"after", field_json(d.after)}};
    json j = {{"kind", std::string(to_string(e.kind))}, {"action", e.action_id}, {"steps", e.steps}, {"delta", delta}};
    j["t_ms"] = e.at ? json(e.at->millis) : json(nullptr);
    return j;
}

json verdict_to_json(const Verdict& v)
{
    json findings = json::array();
    for (const auto& f : v.findings) {
        json responses = json::array();
        for (const auto& r : f.responses)
            responses.push_back({{"step", r.step},
                                 {"index", r.event_index},
                                 {"t_ms", r.event.at.millis},
                                 {"arrhythmia", std::string(to_string(r.event.arrhythmia))},
                                 {"label", std::string(to_string(r.label))}});
        findings.push_back({{"cause", effect_to_json(f.cause)},
                            {"responses", responses},
                            {"link", f.link_id},
                            {"grade", std::string(to_string(f.grade))}});
    }
    return {{"status", std::string(to_string(v.status))},
            {"lethal_attack_proven", v.lethal_attack_proven},
            {"findings", findings},
            {"narrative", v.narrative}};
}

} // namespace imdpm
