#include "imdpm/world_state.hpp"

#include "imdpm/errors.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace imdpm {

namespace {

enum class Slot { boolean, integer, real, text };

struct FieldAccess
{
    std::string path;
    Slot slot;
    std::function<FieldValue(const WorldState&)> get;
    std::function<void(WorldState&, const FieldValue&)> set;
};

bool as_bool(const FieldValue& v, std::string_view path)
{
    if (auto b = std::get_if<bool>(&v))
        return *b;
    throw ValidationError("field " + std::string(path) + " expects a boolean, got " + render(v));
}

std::int64_t as_int(const FieldValue& v, std::string_view path)
{
    if (auto i = std::get_if<std::int64_t>(&v))
        return *i;
    if (auto d = std::get_if<double>(&v); d && std::floor(*d) == *d)
        return static_cast<std::int64_t>(*d);
    throw ValidationError("field " + std::string(path) + " expects an integer, got " + render(v));
}

double as_real(const FieldValue& v, std::string_view path)
{
    if (auto d = std::get_if<double>(&v))
        return *d;
    if (auto i = std::get_if<std::int64_t>(&v))
        return static_cast<double>(*i);
    throw ValidationError("field " + std::string(path) + " expects a number, got " + render(v));
}

std::string as_text(const FieldValue& v, std::string_view path)
{
    if (auto s = std::get_if<std::string>(&v))
        return *s;
    throw ValidationError("field " + std::string(path) + " expects a string, got " + render(v));
}

template <typename Member>
FieldAccess bool_field(std::string path, Member member)
{
    return {path, Slot::boolean, [member](const WorldState& s) -> FieldValue { return member(const_cast<WorldState&>(s)); },
            [member, path](WorldState& s, const FieldValue& v) { member(s) = as_bool(v, path); }};
}

template <typename Member>
FieldAccess int_field(std::string path, Member member)
{
    return {path, Slot::integer,
            [member](const WorldState& s) -> FieldValue {
                return static_cast<std::int64_t>(member(const_cast<WorldState&>(s)));
            },
            [member, path](WorldState& s, const FieldValue& v) {
                using Target = std::remove_reference_t<decltype(member(s))>;
                member(s) = static_cast<Target>(as_int(v, path));
            }};
}

template <typename Member>
FieldAccess real_field(std::string path, Member member)
{
    return {path, Slot::real, [member](const WorldState& s) -> FieldValue { return member(const_cast<WorldState&>(s)); },
            [member, path](WorldState& s, const FieldValue& v) { member(s) = as_real(v, path); }};
}

template <typename Member>
FieldAccess text_field(std::string path, Member member)
{
    return {path, Slot::text, [member](const WorldState& s) -> FieldValue { return member(const_cast<WorldState&>(s)); },
            [member, path](WorldState& s, const FieldValue& v) { member(s) = as_text(v, path); }};
}

template <typename T>
FieldAccess zone_field(std::string path, ArrhythmiaKind kind, T DetectionZone::*member)
{
    constexpr Slot slot = std::is_same_v<T, double> ? Slot::real : Slot::integer;
    return {path, slot,
            [kind, member](const WorldState& s) -> FieldValue {
                auto it = s.imd.therapy.zones.find(kind);
                T value = it == s.imd.therapy.zones.end() ? T{} : it->second.*member;
                if constexpr (std::is_same_v<T, double>)
                    return value;
                else
                    return static_cast<std::int64_t>(value);
            },
            [kind, member, path](WorldState& s, const FieldValue& v) {
                if constexpr (std::is_same_v<T, double>)
                    s.imd.therapy.zones[kind].*member = as_real(v, path);
                else
                    s.imd.therapy.zones[kind].*member = static_cast<T>(as_int(v, path));
            }};
}

std::vector<FieldAccess> build_fields()
{
    std::vector<FieldAccess> f;
    f.push_back(bool_field("imd.enabled", [](WorldState& s) -> bool& { return s.imd.enabled; }));
    f.push_back(int_field("imd.shock_budget_used", [](WorldState& s) -> int& { return s.imd.shock_budget_used; }));
    f.push_back(int_field("imd.clock_offset_ms", [](WorldState& s) -> std::int64_t& { return s.imd.clock_offset_ms; }));
    f.push_back(text_field("imd.firmware", [](WorldState& s) -> std::string& { return s.imd.firmware; }));
    f.push_back(int_field("imd.battery", [](WorldState& s) -> int& { return s.imd.battery; }));
    f.push_back(int_field("imd.therapy.max_shocks", [](WorldState& s) -> int& { return s.imd.therapy.max_shocks; }));
    f.push_back(int_field("imd.therapy.shock_window_ms",
                          [](WorldState& s) -> std::int64_t& { return s.imd.therapy.shock_window_ms; }));
    for (auto kind : all_arrhythmia_kinds) {
        std::string base = "imd.therapy." + std::string(to_string(kind)) + ".";
        f.push_back(zone_field(base + "detect_min_bpm", kind, &DetectionZone::min_bpm));
        f.push_back(zone_field(base + "detect_max_bpm", kind, &DetectionZone::max_bpm));
        f.push_back(zone_field(base + "shock_j", kind, &DetectionZone::shock_j));
    }
    f.push_back(bool_field("adversary.captured_traffic", [](WorldState& s) -> bool& { return s.adversary.captured_traffic; }));
    f.push_back(bool_field("adversary.knows_credentials", [](WorldState& s) -> bool& { return s.adversary.knows_credentials; }));
    f.push_back(bool_field("adversary.has_replay_token", [](WorldState& s) -> bool& { return s.adversary.has_replay_token; }));
    f.push_back(bool_field("adversary.knows_patient_data",
                           [](WorldState& s) -> bool& { return s.adversary.knows_patient_data; }));
    f.push_back(bool_field("adversary.persistent", [](WorldState& s) -> bool& { return s.adversary.persistent; }));
    f.push_back(text_field("adversary.session", [](WorldState& s) -> std::string& { return s.adversary.session; }));
    f.push_back(bool_field("physician.in_range", [](WorldState& s) -> bool& { return s.physician.in_range; }));
    f.push_back(text_field("physician.session", [](WorldState& s) -> std::string& { return s.physician.session; }));
    f.push_back(bool_field("exchanges_encrypted", [](WorldState& s) -> bool& { return s.exchanges_encrypted; }));
    f.push_back(bool_field("exchanges_session_unique", [](WorldState& s) -> bool& { return s.exchanges_session_unique; }));
    f.push_back(bool_field("channel_jammed", [](WorldState& s) -> bool& { return s.channel_jammed; }));
    return f;
}

const std::vector<FieldAccess>& fields()
{
    static const std::vector<FieldAccess> table = build_fields();
    return table;
}

const FieldAccess* find_field(std::string_view path)
{
    for (const auto& f : fields())
        if (f.path == path)
            return &f;
    return nullptr;
}

constexpr std::string_view sessions_prefix = "imd.sessions.";

} // namespace

std::string render(const FieldValue& v)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>)
                return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::string>)
                return "\"" + x + "\"";
            else if constexpr (std::is_same_v<T, double>)
                return nlohmann::json(x).dump();
            else
                return std::to_string(x);
        },
        v);
}

FieldValue get_field(const WorldState& s, std::string_view path)
{
    if (path.starts_with(sessions_prefix)) {
        auto it = s.imd.sessions.find(std::string(path.substr(sessions_prefix.size())));
        return it == s.imd.sessions.end() ? std::string() : it->second;
    }
    if (const auto* f = find_field(path))
        return f->get(s);
    throw ValidationError("unknown state field '" + std::string(path) + "'");
}

void set_field(WorldState& s, std::string_view path, const FieldValue& value)
{
    if (const auto* f = find_field(path)) {
        f->set(s, value);
        return;
    }
    throw ValidationError("unknown or read-only state field '" + std::string(path) + "'");
}

bool is_known_field(std::string_view path)
{
    return find_field(path) != nullptr;
}

std::vector<std::string> field_paths()
{
    std::vector<std::string> out;
    for (const auto& f : fields())
        out.push_back(f.path);
    return out;
}

std::map<std::string, FieldValue> flatten(const WorldState& s)
{
    std::map<std::string, FieldValue> out;
    for (const auto& f : fields())
        out.emplace(f.path, f.get(s));
    for (const auto& [sid, uid] : s.imd.sessions)
        out.emplace(std::string(sessions_prefix) + sid, uid);
    return out;
}

std::set<std::string> changed_fields(const WorldState& before, const WorldState& after)
{
    auto a = flatten(before);
    auto b = flatten(after);
    std::set<std::string> out;
    for (const auto& [path, value] : a) {
        auto it = b.find(path);
        if (it == b.end() || it->second != value)
            out.insert(path);
    }
    for (const auto& [path, value] : b)
        if (!a.contains(path))
            out.insert(path);
    return out;
}

bool path_covered_by(std::string_view path, std::string_view prefix)
{
    if (!path.starts_with(prefix))
        return false;
    return path.size() == prefix.size() || path[prefix.size()] == '.';
}

void WorldState::validate() const
{
    if (imd.battery < 0 || imd.battery > 100)
        throw ValidationError("battery must be within 0..100, got " + std::to_string(imd.battery));
    if (imd.shock_budget_used < 0)
        throw ValidationError("shock budget used must be non-negative");
    if (!adversary.session.empty() && !imd.sessions.contains(adversary.session))
        throw ValidationError("adversary holds session '" + adversary.session + "' which is not open");
    if (!physician.session.empty() && !imd.sessions.contains(physician.session))
        throw ValidationError("physician holds session '" + physician.session + "' which is not open");
    if (imd.therapy.max_shocks < 1)
        throw ValidationError("therapy max_shocks must be at least 1");
}

std::string WorldState::key() const
{
    nlohmann::json j = *this;
    return j.dump();
}

void to_json(nlohmann::json& j, const TherapySettings& s)
{
    nlohmann::json zones = nlohmann::json::object();
    for (const auto& [kind, zone] : s.zones)
        zones[std::string(to_string(kind))] = {
            {"min_bpm", zone.min_bpm}, {"max_bpm", zone.max_bpm}, {"shock_j", zone.shock_j}};
    j = {{"zones", zones}, {"max_shocks", s.max_shocks}, {"shock_window_ms", s.shock_window_ms}};
}

void from_json(const nlohmann::json& j, TherapySettings& s)
{
    s = TherapySettings::defaults();
    if (j.contains("zones")) {
        for (const auto& [name, zone] : j.at("zones").items()) {
            auto kind = parse_arrhythmia(name);
            auto& target = s.zones[kind];
            target.min_bpm = zone.value("min_bpm", target.min_bpm);
            target.max_bpm = zone.value("max_bpm", target.max_bpm);
            target.shock_j = zone.value("shock_j", target.shock_j);
        }
    }
    s.max_shocks = j.value("max_shocks", s.max_shocks);
    s.shock_window_ms = j.value("shock_window_ms", s.shock_window_ms);
}

void to_json(nlohmann::json& j, const WorldState& s)
{
    j = {
        {"imd",
         {{"therapy", s.imd.therapy},
          {"enabled", s.imd.enabled},
          {"shock_budget_used", s.imd.shock_budget_used},
          {"clock_offset_ms", s.imd.clock_offset_ms},
          {"firmware", s.imd.firmware},
          {"battery", s.imd.battery},
          {"sessions", s.imd.sessions}}},
        {"adversary",
         {{"captured_traffic", s.adversary.captured_traffic},
          {"knows_credentials", s.adversary.knows_credentials},
          {"has_replay_token", s.adversary.has_replay_token},
          {"knows_patient_data", s.adversary.knows_patient_data},
          {"persistent", s.adversary.persistent},
          {"session", s.adversary.session}}},
        {"physician", {{"in_range", s.physician.in_range}, {"session", s.physician.session}}},
        {"exchanges_encrypted", s.exchanges_encrypted},
        {"exchanges_session_unique", s.exchanges_session_unique},
        {"channel_jammed", s.channel_jammed},
    };
}

void from_json(const nlohmann::json& j, WorldState& s)
{
    s = WorldState{};
    if (j.contains("imd")) {
        const auto& imd = j.at("imd");
        if (imd.contains("therapy"))
            s.imd.therapy = imd.at("therapy").get<TherapySettings>();
        s.imd.enabled = imd.value("enabled", s.imd.enabled);
        s.imd.shock_budget_used = imd.value("shock_budget_used", s.imd.shock_budget_used);
        s.imd.clock_offset_ms = imd.value("clock_offset_ms", s.imd.clock_offset_ms);
        s.imd.firmware = imd.value("firmware", s.imd.firmware);
        s.imd.battery = imd.value("battery", s.imd.battery);
        if (imd.contains("sessions"))
            s.imd.sessions = imd.at("sessions").get<std::map<std::string, std::string>>();
    }
    if (j.contains("adversary")) {
        const auto& adv = j.at("adversary");
        s.adversary.captured_traffic = adv.value("captured_traffic", false);
        s.adversary.knows_credentials = adv.value("knows_credentials", false);
        s.adversary.has_replay_token = adv.value("has_replay_token", false);
        s.adversary.knows_patient_data = adv.value("knows_patient_data", false);
        s.adversary.persistent = adv.value("persistent", false);
        s.adversary.session = adv.value("session", std::string());
    }
    if (j.contains("physician")) {
        const auto& doc = j.at("physician");
        s.physician.in_range = doc.value("in_range", false);
        s.physician.session = doc.value("session", std::string());
    }
    s.exchanges_encrypted = j.value("exchanges_encrypted", s.exchanges_encrypted);
    s.exchanges_session_unique = j.value("exchanges_session_unique", s.exchanges_session_unique);
    s.channel_jammed = j.value("channel_jammed", s.channel_jammed);
    s.validate();
}

} // namespace imdpm
