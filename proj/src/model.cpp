#include "imdpm/model.hpp"

#include "imdpm/errors.hpp"

#include <algorithm>
#include <sstream>

namespace imdpm {

std::string_view to_string(ArrhythmiaKind kind)
{
    switch (kind) {
    case ArrhythmiaKind::VF: return "VF";
    case ArrhythmiaKind::VT: return "VT";
    case ArrhythmiaKind::VES: return "VES";
    case ArrhythmiaKind::ST: return "ST";
    case ArrhythmiaKind::AF: return "AF";
    }
    return "?";
}

std::string_view to_string(ResponseLabel label)
{
    switch (label) {
    case ResponseLabel::OK: return "OK";
    case ResponseLabel::IR: return "IR";
    case ResponseLabel::AR: return "AR";
    }
    return "?";
}

std::optional<ArrhythmiaKind> try_parse_arrhythmia(std::string_view token)
{
    for (auto kind : all_arrhythmia_kinds)
        if (to_string(kind) == token)
            return kind;
    return std::nullopt;
}

std::optional<ResponseLabel> try_parse_label(std::string_view token)
{
    for (auto label : {ResponseLabel::OK, ResponseLabel::IR, ResponseLabel::AR})
        if (to_string(label) == token)
            return label;
    return std::nullopt;
}

ArrhythmiaKind parse_arrhythmia(std::string_view token)
{
    if (auto kind = try_parse_arrhythmia(token))
        return *kind;
    throw ValidationError("unknown arrhythmia kind '" + std::string(token) + "'");
}

ResponseLabel parse_label(std::string_view token)
{
    if (auto label = try_parse_label(token))
        return *label;
    throw ValidationError("unknown response label '" + std::string(token) + "'");
}

int nominal_rate_bpm(ArrhythmiaKind kind)
{
    switch (kind) {
    case ArrhythmiaKind::VF: return 300;
    case ArrhythmiaKind::VT: return 200;
    case ArrhythmiaKind::ST: return 150;
    case ArrhythmiaKind::AF: return 125;
    case ArrhythmiaKind::VES: return 90;
    }
    return 0;
}

MedicalEvent MedicalEvent::make_arrhythmia(Timestamp at, ArrhythmiaKind kind, std::optional<ResponseLabel> label)
{
    MedicalEvent ev;
    ev.at = at;
    ev.type = Type::arrhythmia;
    ev.arrhythmia = kind;
    ev.label = label;
    return ev;
}

MedicalEvent MedicalEvent::make_shock(Timestamp at, double energy_j)
{
    MedicalEvent ev;
    ev.at = at;
    ev.type = Type::shock;
    ev.energy_j = energy_j;
    return ev;
}

MedicalEvent MedicalEvent::make_heart_death(Timestamp at)
{
    MedicalEvent ev;
    ev.at = at;
    ev.type = Type::heart_death;
    return ev;
}

std::string describe(const MedicalEvent& ev)
{
    std::ostringstream out;
    switch (ev.type) {
    case MedicalEvent::Type::arrhythmia:
        out << to_string(ev.arrhythmia);
        if (ev.label)
            out << '[' << to_string(*ev.label) << ']';
        break;
    case MedicalEvent::Type::shock: out << "shock(" << ev.energy_j << " J)"; break;
    case MedicalEvent::Type::heart_death: out << "HD"; break;
    }
    out << '@' << ev.at.millis;
    return out.str();
}

MedicalLog MedicalLog::from_events(std::vector<MedicalEvent> events)
{
    std::stable_sort(events.begin(), events.end(),
                     [](const MedicalEvent& a, const MedicalEvent& b) { return a.at < b.at; });
    MedicalLog log{std::move(events)};
    log.validate();
    return log;
}

void MedicalLog::validate() const
{
    std::size_t deaths = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& ev = events[i];
        if (i > 0 && ev.at < events[i - 1].at)
            throw ValidationError("medical log is not sorted at " + describe(ev));
        if (ev.is_shock() && !(ev.energy_j > 0.0))
            throw ValidationError("shock energy must be positive at " + describe(ev));
        if (ev.is_heart_death())
            ++deaths;
    }
    if (deaths > 1)
        throw ValidationError("medical log contains more than one heart death event");
    if (auto hd = heart_death_index()) {
        for (const auto& ev : events)
            if (ev.at > events[*hd].at)
                throw ValidationError("heart death is not the latest medical event");
    }
}

std::optional<std::size_t> MedicalLog::heart_death_index() const
{
    for (std::size_t i = 0; i < events.size(); ++i)
        if (events[i].is_heart_death())
            return i;
    return std::nullopt;
}

namespace {

struct KindName
{
    TechnicalKind kind;
    std::string_view name;
};

constexpr std::array<KindName, 9> technical_kind_names = {{
    {TechnicalKind::session_opened, "session_opened"},
    {TechnicalKind::session_closed, "session_closed"},
    {TechnicalKind::auth_failure, "auth_failure"},
    {TechnicalKind::therapy_modified, "therapy_modified"},
    {TechnicalKind::therapy_disabled, "therapy_disabled"},
    {TechnicalKind::clock_set, "clock_set"},
    {TechnicalKind::firmware_updated, "firmware_updated"},
    {TechnicalKind::shock_commanded, "shock_commanded"},
    {TechnicalKind::log_read, "log_read"},
}};

} // namespace

std::string_view to_string(TechnicalKind kind)
{
    for (const auto& entry : technical_kind_names)
        if (entry.kind == kind)
            return entry.name;
    return "?";
}

TechnicalKind parse_technical_kind(std::string_view token)
{
    for (const auto& entry : technical_kind_names)
        if (entry.name == token)
            return entry.kind;
    throw ValidationError("unknown technical event kind '" + std::string(token) + "'");
}

const std::vector<FieldSpec>& payload_schema(TechnicalKind kind)
{
    static const std::vector<FieldSpec> none;
    static const std::vector<FieldSpec> opened = {{"session_id", FieldType::text}, {"user_id", FieldType::text}};
    static const std::vector<FieldSpec> closed = {{"session_id", FieldType::text}};
    static const std::vector<FieldSpec> auth = {{"user_id", FieldType::text}};
    static const std::vector<FieldSpec> clock = {{"new_time_ms", FieldType::integer}};
    static const std::vector<FieldSpec> firmware = {{"version", FieldType::text}};
    static const std::vector<FieldSpec> shock = {{"energy_j", FieldType::number}};

    switch (kind) {
    case TechnicalKind::session_opened: return opened;
    case TechnicalKind::session_closed: return closed;
    case TechnicalKind::auth_failure: return auth;
    case TechnicalKind::clock_set: return clock;
    case TechnicalKind::firmware_updated: return firmware;
    case TechnicalKind::shock_commanded: return shock;
    case TechnicalKind::therapy_modified:
    case TechnicalKind::therapy_disabled:
    case TechnicalKind::log_read: return none;
    }
    return none;
}

const std::string& TechnicalEvent::field(std::string_view name) const
{
    static const std::string empty;
    auto it = fields.find(std::string(name));
    return it == fields.end() ? empty : it->second;
}

std::string describe(const TechnicalEvent& ev)
{
    std::ostringstream out;
    out << to_string(ev.kind) << '{';
    bool first = true;
    for (const auto& [name, value] : ev.fields) {
        out << (first ? "" : ", ") << name << '=' << value;
        first = false;
    }
    for (const auto& [name, change] : ev.changes) {
        out << (first ? "" : ", ") << name << ':' << change.old_value << "->" << change.new_value;
        first = false;
    }
    out << "}@" << ev.at.millis;
    return out.str();
}

TherapyExpectation TherapyExpectation::defaults()
{
    TherapyExpectation e;
    e.per_arrhythmia[ArrhythmiaKind::VF] = {EnergyRange{30.0, 40.0}, Duration{10'000}};
    e.per_arrhythmia[ArrhythmiaKind::VT] = {EnergyRange{1.0, 10.0}, Duration{10'000}};
    e.per_arrhythmia[ArrhythmiaKind::ST] = {std::nullopt, Duration{10'000}};
    e.per_arrhythmia[ArrhythmiaKind::AF] = {std::nullopt, Duration{10'000}};
    e.per_arrhythmia[ArrhythmiaKind::VES] = {std::nullopt, Duration{10'000}};
    return e;
}

void TherapyExpectation::validate() const
{
    if (max_shocks < 1)
        throw ValidationError("expectation max_shocks must be at least 1");
    if (shock_window.millis <= 0)
        throw ValidationError("expectation shock_window must be positive");
    for (const auto& [kind, entry] : per_arrhythmia) {
        if (entry.energy && entry.energy->min_j > entry.energy->max_j)
            throw ValidationError("empty energy range for " + std::string(to_string(kind)));
        if (entry.max_response_delay.millis < 0)
            throw ValidationError("negative response delay for " + std::string(to_string(kind)));
    }
}

TherapySettings TherapySettings::defaults()
{
    TherapySettings s;
    s.zones[ArrhythmiaKind::VF] = {240, 400, 35.0};
    s.zones[ArrhythmiaKind::VT] = {180, 239, 5.1};
    s.zones[ArrhythmiaKind::ST] = {140, 179, 0.0};
    s.zones[ArrhythmiaKind::AF] = {110, 139, 0.0};
    s.zones[ArrhythmiaKind::VES] = {60, 109, 0.0};
    return s;
}

std::optional<ArrhythmiaKind> TherapySettings::detect(int rate_bpm) const
{
    for (auto kind : detection_priority) {
        auto it = zones.find(kind);
        if (it != zones.end() && rate_bpm >= it->second.min_bpm && rate_bpm <= it->second.max_bpm)
            return kind;
    }
    return std::nullopt;
}

std::optional<double> TherapySettings::shock_for(int rate_bpm) const
{
    auto detected = detect(rate_bpm);
    if (!detected)
        return std::nullopt;
    double energy = zones.at(*detected).shock_j;
    if (energy <= 0.0)
        return std::nullopt;
    return energy;
}

MedicalLog classify_responses(const MedicalLog& medical, const TherapyExpectation& expectation)
{
    MedicalLog out = medical;
    std::vector<bool> consumed(out.events.size(), false);

    for (std::size_t i = 0; i < out.events.size(); ++i) {
        auto& ev = out.events[i];
        if (!ev.is_arrhythmia())
            continue;
        auto entry = expectation.per_arrhythmia.find(ev.arrhythmia);
        if (entry == expectation.per_arrhythmia.end())
            throw ValidationError("no therapy expectation for arrhythmia " + std::string(to_string(ev.arrhythmia)));
        const auto& expected = entry->second;

        std::optional<std::size_t> shock;
        for (std::size_t j = i + 1; j < out.events.size(); ++j) {
            const auto& candidate = out.events[j];
            if (candidate.at - ev.at > expected.max_response_delay)
                break;
            if (candidate.is_shock() && !consumed[j]) {
                shock = j;
                break;
            }
        }

        if (shock) {
            consumed[*shock] = true;
            bool appropriate = expected.energy && expected.energy->contains(out.events[*shock].energy_j);
            ev.label = appropriate ? ResponseLabel::OK : ResponseLabel::IR;
        } else {
            ev.label = expected.energy ? ResponseLabel::AR : ResponseLabel::OK;
        }
    }
    return out;
}

} // namespace imdpm
