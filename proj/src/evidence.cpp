#include "imdpm/evidence.hpp"

#include "imdpm/errors.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace imdpm {

using nlohmann::json;

namespace {

// nlohmann reports the offset one past the offending byte.
std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte)
{
    std::size_t line = 1;
    std::size_t column = 1;
    std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

std::int64_t required_time(const json& j)
{
    if (!j.contains("t_ms"))
        throw ValidationError("event without t_ms: " + j.dump());
    auto t = j.at("t_ms").get<std::int64_t>();
    if (t < 0)
        throw ValidationError("negative timestamp in event: " + j.dump());
    return t;
}

std::string field_text(const json& value, FieldType type, std::string_view name)
{
    switch (type) {
    case FieldType::text:
        if (!value.is_string())
            throw ValidationError("field " + std::string(name) + " must be a string");
        return value.get<std::string>();
    case FieldType::integer:
        if (!value.is_number_integer())
            throw ValidationError("field " + std::string(name) + " must be an integer");
        return std::to_string(value.get<std::int64_t>());
    case FieldType::number:
        if (!value.is_number())
            throw ValidationError("field " + std::string(name) + " must be a number");
        return json(value.get<double>()).dump();
    }
    return {};
}

json field_json(const std::string& text, FieldType type)
{
    switch (type) {
    case FieldType::text: return text;
    case FieldType::integer: return std::stoll(text);
    case FieldType::number: return std::stod(text);
    }
    return text;
}

} // namespace

std::string canonical_field_text(FieldType type, std::string_view raw)
{
    if (type == FieldType::text)
        return std::string(raw);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    if (ec != std::errc() || ptr != raw.data() + raw.size())
        throw ValidationError("expected a numeric value, got '" + std::string(raw) + "'");
    if (type == FieldType::integer) {
        if (value != static_cast<double>(static_cast<std::int64_t>(value)))
            throw ValidationError("expected an integer value, got '" + std::string(raw) + "'");
        return std::to_string(static_cast<std::int64_t>(value));
    }
    return json(value).dump();
}

json parse_json_document(std::string_view text, std::string_view what)
{
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        auto [line, column] = line_column(text, e.byte);
        throw ParseError(std::string(what) + ": syntax error: " + e.what(), line, column);
    }
}

void to_json(json& j, const MedicalEvent& ev)
{
    j = {{"t_ms", ev.at.millis}};
    switch (ev.type) {
    case MedicalEvent::Type::arrhythmia:
        j["kind"] = "arrhythmia";
        j["arrhythmia"] = std::string(to_string(ev.arrhythmia));
        if (ev.rate_bpm)
            j["rate_bpm"] = *ev.rate_bpm;
        if (ev.label)
            j["label"] = std::string(to_string(*ev.label));
        break;
    case MedicalEvent::Type::shock:
        j["kind"] = "shock";
        j["energy_j"] = ev.energy_j;
        break;
    case MedicalEvent::Type::heart_death: j["kind"] = "heart_death"; break;
    }
}

void from_json(const json& j, MedicalEvent& ev)
{
    Timestamp at{required_time(j)};
    auto kind = j.at("kind").get<std::string>();
    if (kind == "arrhythmia") {
        ev = MedicalEvent::make_arrhythmia(at, parse_arrhythmia(j.at("arrhythmia").get<std::string>()));
        if (j.contains("rate_bpm"))
            ev.rate_bpm = j.at("rate_bpm").get<int>();
        if (j.contains("label"))
            ev.label = parse_label(j.at("label").get<std::string>());
    } else if (kind == "shock") {
        if (!j.contains("energy_j"))
            throw ValidationError("shock event without energy_j at t_ms=" + std::to_string(at.millis));
        ev = MedicalEvent::make_shock(at, j.at("energy_j").get<double>());
        if (!(ev.energy_j > 0.0))
            throw ValidationError("shock energy must be positive at t_ms=" + std::to_string(at.millis));
    } else if (kind == "heart_death") {
        ev = MedicalEvent::make_heart_death(at);
    } else {
        throw ValidationError("unknown medical event kind '" + kind + "'");
    }
}

void to_json(json& j, const TechnicalEvent& ev)
{
    j = {{"t_ms", ev.at.millis}, {"kind", std::string(to_string(ev.kind))}};
    for (const auto& spec : payload_schema(ev.kind)) {
        auto it = ev.fields.find(std::string(spec.name));
        if (it != ev.fields.end())
            j[std::string(spec.name)] = field_json(it->second, spec.type);
    }
    if (ev.kind == TechnicalKind::therapy_modified) {
        json changes = json::object();
        for (const auto& [name, change] : ev.changes)
            changes[name] = {{"old", change.old_value}, {"new", change.new_value}};
        j["changes"] = changes;
    }
    if (!ev.attrs.empty())
        j["attrs"] = ev.attrs;
}

void from_json(const json& j, TechnicalEvent& ev)
{
    ev = TechnicalEvent{};
    ev.at = Timestamp{required_time(j)};
    ev.kind = parse_technical_kind(j.at("kind").get<std::string>());
    for (const auto& spec : payload_schema(ev.kind)) {
        if (!j.contains(std::string(spec.name)))
            throw ValidationError(std::string(to_string(ev.kind)) + " event at t_ms=" + std::to_string(ev.at.millis) +
                                  " lacks field " + std::string(spec.name));
        ev.fields[std::string(spec.name)] = field_text(j.at(std::string(spec.name)), spec.type, spec.name);
    }
    if (ev.kind == TechnicalKind::therapy_modified) {
        if (!j.contains("changes") || !j.at("changes").is_object())
            throw ValidationError("therapy_modified event at t_ms=" + std::to_string(ev.at.millis) +
                                  " lacks a changes object");
        for (const auto& [name, change] : j.at("changes").items())
            ev.changes[name] = ParamChange{change.at("old").get<double>(), change.at("new").get<double>()};
    }
    if (j.contains("attrs"))
        ev.attrs = j.at("attrs").get<std::map<std::string, std::string>>();
}

void to_json(json& j, const TherapyExpectation& e)
{
    json per = json::object();
    for (const auto& [kind, entry] : e.per_arrhythmia) {
        json energy = nullptr;
        if (entry.energy)
            energy = json::array({entry.energy->min_j, entry.energy->max_j});
        per[std::string(to_string(kind))] = {{"energy_j", energy},
                                             {"max_response_delay_ms", entry.max_response_delay.millis}};
    }
    j = {{"per_arrhythmia", per}, {"max_shocks", e.max_shocks}, {"shock_window_ms", e.shock_window.millis}};
}

void from_json(const json& j, TherapyExpectation& e)
{
    e = TherapyExpectation{};
    if (j.contains("per_arrhythmia")) {
        for (const auto& [name, entry] : j.at("per_arrhythmia").items()) {
            ResponseExpectation r;
            const auto& energy = entry.at("energy_j");
            if (!energy.is_null()) {
                if (!energy.is_array() || energy.size() != 2)
                    throw ValidationError("energy_j for " + name + " must be null or [min, max]");
                r.energy = EnergyRange{energy[0].get<double>(), energy[1].get<double>()};
            }
            r.max_response_delay = Duration{entry.value("max_response_delay_ms", r.max_response_delay.millis)};
            e.per_arrhythmia[parse_arrhythmia(name)] = r;
        }
    } else {
        e.per_arrhythmia = TherapyExpectation::defaults().per_arrhythmia;
    }
    e.max_shocks = j.value("max_shocks", e.max_shocks);
    e.shock_window = Duration{j.value("shock_window_ms", e.shock_window.millis)};
    e.validate();
}

std::vector<TechnicalEvent> normalize_technical_log(std::vector<TechnicalEvent> events)
{
    std::stable_sort(events.begin(), events.end(),
                     [](const TechnicalEvent& a, const TechnicalEvent& b) { return a.at < b.at; });
    std::set<std::string> opened;
    for (const auto& ev : events) {
        if (ev.kind == TechnicalKind::session_opened)
            opened.insert(ev.field("session_id"));
        if (ev.kind == TechnicalKind::session_closed && !opened.contains(ev.field("session_id")))
            throw ValidationError("session_closed at t_ms=" + std::to_string(ev.at.millis) +
                                  " references unknown session '" + ev.field("session_id") + "'");
    }
    return events;
}

EvidenceBundle parse_evidence_bundle(std::string_view text)
{
    json doc = parse_json_document(text, "evidence bundle");
    if (!doc.is_object())
        throw ParseError("evidence bundle: top level must be an object", 1, 1);

    EvidenceBundle bundle;
    try {
        if (doc.contains("meta")) {
            const auto& meta = doc.at("meta");
            bundle.meta.case_id = meta.value("case_id", std::string());
            bundle.meta.collected_at = meta.value("collected_at", std::string());
            if (meta.contains("notes"))
                bundle.meta.notes = meta.at("notes").get<std::map<std::string, std::string>>();
        }
        if (doc.contains("initial_state"))
            bundle.initial_state = doc.at("initial_state").get<WorldState>();
        if (doc.contains("expectation"))
            bundle.expectation = doc.at("expectation").get<TherapyExpectation>();

        std::vector<TechnicalEvent> technical;
        for (const auto& item : doc.value("technical", json::array()))
            technical.push_back(item.get<TechnicalEvent>());
        bundle.technical = normalize_technical_log(std::move(technical));

        std::vector<MedicalEvent> medical;
        for (const auto& item : doc.value("medical", json::array()))
            medical.push_back(item.get<MedicalEvent>());
        bundle.medical = MedicalLog::from_events(std::move(medical));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("evidence bundle: ") + e.what());
    }
    return bundle;
}

std::string serialize_evidence_bundle(const EvidenceBundle& bundle)
{
    json doc;
    doc["meta"] = {{"case_id", bundle.meta.case_id},
                   {"collected_at", bundle.meta.collected_at},
                   {"notes", bundle.meta.notes}};
    doc["initial_state"] = bundle.initial_state;
    doc["expectation"] = bundle.expectation;
    doc["technical"] = json::array();
    for (const auto& ev : normalize_technical_log(bundle.technical))
        doc["technical"].push_back(ev);
    doc["medical"] = json::array();
    for (const auto& ev : MedicalLog::from_events(bundle.medical.events).events)
        doc["medical"].push_back(ev);
    return doc.dump(2) + "\n";
}

} // namespace imdpm
