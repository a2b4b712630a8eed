#pragma once

#include "imdpm/model.hpp"
#include "imdpm/world_state.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace imdpm {

struct CaseMeta
{
    std::string case_id;
    std::string collected_at;
    // Autopsy observations and medical-record excerpts, carried verbatim.
    std::map<std::string, std::string> notes;

    bool operator==(const CaseMeta&) const = default;
};

// Everything an investigation starts from.
struct EvidenceBundle
{
    std::vector<TechnicalEvent> technical;
    MedicalLog medical;
    WorldState initial_state;
    TherapyExpectation expectation = TherapyExpectation::defaults();
    CaseMeta meta;

    bool operator==(const EvidenceBundle&) const = default;
};

// Parses the JSON evidence format. Syntax errors carry the byte offset as
// column (line 0 when the parser reports none); invariant violations
// (unknown kinds, dangling session ids, duplicate heart death) throw
// ValidationError. Both logs come back stably sorted by time.
EvidenceBundle parse_evidence_bundle(std::string_view text);

// Canonical form: lexicographically sorted keys, time-sorted arrays,
// two-space indentation, trailing newline.
std::string serialize_evidence_bundle(const EvidenceBundle& bundle);

// Sorts the technical log stably and checks that every session_closed
// references a session opened earlier in the same log.
std::vector<TechnicalEvent> normalize_technical_log(std::vector<TechnicalEvent> events);

void to_json(nlohmann::json& j, const MedicalEvent& ev);
void from_json(const nlohmann::json& j, MedicalEvent& ev);
void to_json(nlohmann::json& j, const TechnicalEvent& ev);
void from_json(const nlohmann::json& j, TechnicalEvent& ev);
void to_json(nlohmann::json& j, const TherapyExpectation& e);
void from_json(const nlohmann::json& j, TherapyExpectation& e);

// Canonical text for a payload field value: integers without a fraction,
// numbers in shortest round-trip form. Throws ValidationError otherwise.
std::string canonical_field_text(FieldType type, std::string_view raw);

// Throws ParseError positioned at the parser's failure offset.
nlohmann::json parse_json_document(std::string_view text, std::string_view what);

} // namespace imdpm
