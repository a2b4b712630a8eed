#pragma once

#include "imdpm/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace imdpm {

struct ImdState
{
    TherapySettings therapy = TherapySettings::defaults();
    bool enabled = true;
    int shock_budget_used = 0;
    std::int64_t clock_offset_ms = 0;
    std::string firmware = "1.0.0";
    int battery = 100;
    std::map<std::string, std::string> sessions; // session id -> user id

    bool operator==(const ImdState&) const = default;
};

struct AdversaryState
{
    bool captured_traffic = false;
    bool knows_credentials = false;
    bool has_replay_token = false;
    bool knows_patient_data = false;
    bool persistent = false; // can sustain long captures (traffic analysis)
    std::string session;     // empty when the adversary holds no session

    bool operator==(const AdversaryState&) const = default;
};

struct PhysicianState
{
    bool in_range = false;
    std::string session;

    bool operator==(const PhysicianState&) const = default;
};

// Joint IMD + adversary state explored by the reconstruction.
struct WorldState
{
    ImdState imd;
    AdversaryState adversary;
    PhysicianState physician;
    bool exchanges_encrypted = false;
    bool exchanges_session_unique = true;
    bool channel_jammed = false;

    // Throws ValidationError when battery is outside 0..100, the shock budget
    // is negative, or a held session is not open on the device.
    void validate() const;

    // Canonical compact serialization; equal states have equal keys.
    [[nodiscard]] std::string key() const;

    bool operator==(const WorldState&) const = default;
};

using FieldValue = std::variant<bool, std::int64_t, double, std::string>;

std::string render(const FieldValue& v);

// Dotted-path access to scalar fields, e.g. "imd.battery",
// "adversary.session", "imd.therapy.VF.detect_min_bpm". Session entries are
// exposed read-only as "imd.sessions.<id>". Unknown paths throw
// ValidationError.
FieldValue get_field(const WorldState& s, std::string_view path);
void set_field(WorldState& s, std::string_view path, const FieldValue& value);
bool is_known_field(std::string_view path);
std::vector<std::string> field_paths();

// Every scalar field (plus one entry per open session) by dotted path.
std::map<std::string, FieldValue> flatten(const WorldState& s);

// Paths whose values differ, including sessions present on one side only.
std::set<std::string> changed_fields(const WorldState& before, const WorldState& after);

// True when `path` equals `prefix` or lies below it ("imd.therapy" covers
// "imd.therapy.VF.shock_j").
bool path_covered_by(std::string_view path, std::string_view prefix);

void to_json(nlohmann::json& j, const WorldState& s);
void from_json(const nlohmann::json& j, WorldState& s);
void to_json(nlohmann::json& j, const TherapySettings& s);
void from_json(const nlohmann::json& j, TherapySettings& s);

} // namespace imdpm
