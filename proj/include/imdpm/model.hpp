#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace imdpm {

struct Duration
{
    std::int64_t millis = 0;

    auto operator<=>(const Duration&) const = default;
    Duration operator+(Duration other) const { return {millis + other.millis}; }
};

// Device clock time in milliseconds since an arbitrary epoch.
struct Timestamp
{
    std::int64_t millis = 0;

    auto operator<=>(const Timestamp&) const = default;
    Duration operator-(Timestamp other) const { return {millis - other.millis}; }
    Timestamp operator+(Duration d) const { return {millis + d.millis}; }
};

enum class ArrhythmiaKind { VF, VT, VES, ST, AF };

inline constexpr std::array<ArrhythmiaKind, 5> all_arrhythmia_kinds = {
    ArrhythmiaKind::VF, ArrhythmiaKind::VT, ArrhythmiaKind::VES, ArrhythmiaKind::ST, ArrhythmiaKind::AF};

enum class ResponseLabel { OK, IR, AR };

std::string_view to_string(ArrhythmiaKind kind);
std::string_view to_string(ResponseLabel label);
// Both throw ValidationError on unknown tokens.
ArrhythmiaKind parse_arrhythmia(std::string_view token);
ResponseLabel parse_label(std::string_view token);
std::optional<ArrhythmiaKind> try_parse_arrhythmia(std::string_view token);
std::optional<ResponseLabel> try_parse_label(std::string_view token);

// Typical ventricular rate used when a recorded episode carries none.
int nominal_rate_bpm(ArrhythmiaKind kind);

struct MedicalEvent
{
    enum class Type { arrhythmia, shock, heart_death };

    Timestamp at;
    Type type = Type::arrhythmia;
    ArrhythmiaKind arrhythmia = ArrhythmiaKind::VF; // arrhythmia events only
    double energy_j = 0.0;                          // shock events only
    std::optional<int> rate_bpm;                    // arrhythmia events only
    std::optional<ResponseLabel> label;             // filled by classify_responses

    static MedicalEvent make_arrhythmia(Timestamp at, ArrhythmiaKind kind,
                                        std::optional<ResponseLabel> label = std::nullopt);
    static MedicalEvent make_shock(Timestamp at, double energy_j);
    static MedicalEvent make_heart_death(Timestamp at);

    [[nodiscard]] bool is_arrhythmia() const { return type == Type::arrhythmia; }
    [[nodiscard]] bool is_shock() const { return type == Type::shock; }
    [[nodiscard]] bool is_heart_death() const { return type == Type::heart_death; }
    [[nodiscard]] int effective_rate_bpm() const { return rate_bpm.value_or(nominal_rate_bpm(arrhythmia)); }

    bool operator==(const MedicalEvent&) const = default;
};

// "VF[AR]@1200", "shock(35 J)@1300", "HD@1400"
std::string describe(const MedicalEvent& ev);

struct MedicalLog
{
    std::vector<MedicalEvent> events;

    // Sorts stably by timestamp and checks the log invariants.
    static MedicalLog from_events(std::vector<MedicalEvent> events);
    // Throws ValidationError: non-positive shock energy, more than one heart
    // death, or a heart death that is not the latest event.
    void validate() const;

    [[nodiscard]] std::optional<std::size_t> heart_death_index() const;

    bool operator==(const MedicalLog&) const = default;
};

enum class TechnicalKind {
    session_opened,
    session_closed,
    auth_failure,
    therapy_modified,
    therapy_disabled,
    clock_set,
    firmware_updated,
    shock_commanded,
    log_read,
};

std::string_view to_string(TechnicalKind kind);
TechnicalKind parse_technical_kind(std::string_view token);

enum class FieldType { text, integer, number };

struct FieldSpec
{
    std::string_view name;
    FieldType type;
};

// Payload fields every event of the given kind must carry (therapy changes
// are carried separately).
const std::vector<FieldSpec>& payload_schema(TechnicalKind kind);

struct ParamChange
{
    double old_value = 0.0;
    double new_value = 0.0;

    bool operator==(const ParamChange&) const = default;
};

// Therapy parameter name ("VF.detect_min_bpm", "max_shocks", ...) -> change.
using TherapyChanges = std::map<std::string, ParamChange>;

struct TechnicalEvent
{
    Timestamp at;
    TechnicalKind kind = TechnicalKind::log_read;
    std::map<std::string, std::string> fields; // payload per payload_schema(kind)
    TherapyChanges changes;                    // therapy_modified only
    std::map<std::string, std::string> attrs;  // free-form, never compared

    [[nodiscard]] const std::string& field(std::string_view name) const;

    bool operator==(const TechnicalEvent&) const = default;
};

std::string describe(const TechnicalEvent& ev);

struct EnergyRange
{
    double min_j = 0.0;
    double max_j = 0.0;

    [[nodiscard]] bool contains(double e) const { return e >= min_j && e <= max_j; }
    bool operator==(const EnergyRange&) const = default;
};

struct ResponseExpectation
{
    std::optional<EnergyRange> energy; // nullopt: no shock is appropriate
    Duration max_response_delay{10'000};

    bool operator==(const ResponseExpectation&) const = default;
};

// What the prescribing physician considers an appropriate device response.
struct TherapyExpectation
{
    std::map<ArrhythmiaKind, ResponseExpectation> per_arrhythmia;
    int max_shocks = 6;
    Duration shock_window{3'600'000};

    static TherapyExpectation defaults();
    void validate() const;

    bool operator==(const TherapyExpectation&) const = default;
};

struct DetectionZone
{
    int min_bpm = 0;
    int max_bpm = 0;
    double shock_j = 0.0; // zero: detected but not shocked

    bool operator==(const DetectionZone&) const = default;
};

// Programmed device configuration. Zones are checked in detection_priority
// order and the first one containing the rate wins.
struct TherapySettings
{
    std::map<ArrhythmiaKind, DetectionZone> zones;
    int max_shocks = 6;
    std::int64_t shock_window_ms = 3'600'000;

    static TherapySettings defaults();

    [[nodiscard]] std::optional<ArrhythmiaKind> detect(int rate_bpm) const;
    // Shock the device would deliver for a given rate, ignoring the budget.
    [[nodiscard]] std::optional<double> shock_for(int rate_bpm) const;

    bool operator==(const TherapySettings&) const = default;
};

inline constexpr std::array<ArrhythmiaKind, 5> detection_priority = {
    ArrhythmiaKind::VF, ArrhythmiaKind::VT, ArrhythmiaKind::ST, ArrhythmiaKind::AF, ArrhythmiaKind::VES};

// Labels every arrhythmia in the log against the expectation. Each shock is
// paired with at most one arrhythmia, earliest unconsumed shock first.
// Throws ValidationError when an arrhythmia kind has no expectation entry.
MedicalLog classify_responses(const MedicalLog& medical, const TherapyExpectation& expectation);

} // namespace imdpm
