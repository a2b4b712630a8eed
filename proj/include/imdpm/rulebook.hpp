#pragma once

#include "imdpm/model.hpp"

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace imdpm {

struct EventPattern
{
    enum class Kind { labeled_arrhythmia, arrhythmia, heart_death, unobservable };

    Kind kind = Kind::heart_death;
    ArrhythmiaKind arrhythmia = ArrhythmiaKind::VF;
    ResponseLabel label = ResponseLabel::OK;
    std::string name; // unobservable events only

    static EventPattern labeled(ArrhythmiaKind kind, ResponseLabel label);
    static EventPattern plain(ArrhythmiaKind kind);
    static EventPattern heart_death();
    static EventPattern unobservable(std::string name);

    [[nodiscard]] bool observable() const { return kind != Kind::unobservable; }
    // Kind (and label, when constrained) match; timestamps play no part.
    [[nodiscard]] bool matches(const MedicalEvent& ev) const;
    // Pattern-to-pattern match used for hypothesized nodes: equal
    // unobservable names, or an observable pattern subsumed by this one.
    [[nodiscard]] bool matches(const EventPattern& other) const;
    // DSL spelling: "VF[AR]", "ST", "HD", "@APE".
    [[nodiscard]] std::string to_dsl() const;

    bool operator==(const EventPattern&) const = default;
};

// (premise)^n ->_T (consequent)^m. The premise is a conjunction listed in
// temporal order.
struct MedicalRule
{
    std::string id;
    std::vector<EventPattern> premise;
    int n = 1;
    EventPattern consequent;
    int m = 1;
    Duration window{60'000};
    std::string note;

    [[nodiscard]] bool premise_unobservable_only() const;

    bool operator==(const MedicalRule& other) const
    {
        return id == other.id && premise == other.premise && n == other.n && consequent == other.consequent &&
               m == other.m && window == other.window;
    }
};

struct RuleSet
{
    std::vector<MedicalRule> rules;
    std::set<std::string> vocabulary; // declared unobservable event names

    [[nodiscard]] const MedicalRule* find(std::string_view id) const;
    // Throws ValidationError on duplicate ids, n or m below 1, a
    // non-positive window, or an undeclared unobservable name.
    void validate() const;

    bool operator==(const RuleSet&) const = default;
};

inline constexpr Duration default_rule_window{60'000};

// The twelve built-in rules. `repetitions` is the n of rule 12.
RuleSet builtin_rules(int repetitions = 6, Duration window = default_rule_window);
std::string_view builtin_rules_text();

// Parses the rule DSL:
//
//   vocab APE syncope
//   rule 1: VF[AR] -T-> VF
//   rule 12: (ST[IR])^6 -T=60000-> VF
//   rule 20: VF[AR] | VF[IR] -T=30000-> @APE
//
// `-T->` takes `default_window`. A premise with `|` alternatives becomes one
// rule per alternative with ids "<id>.1", "<id>.2", ... Throws ParseError
// with line and column.
RuleSet parse_rules(std::string_view text, Duration default_window = default_rule_window);

// Canonical DSL text; parse_rules(serialize_rules(r)) == r.
std::string serialize_rules(const RuleSet& rules);

// A single pattern in DSL spelling ("VF[AR]", "HD", "@APE").
EventPattern parse_pattern(std::string_view text);

bool consequent_matches(const MedicalRule& rule, const MedicalEvent& ev);
bool consequent_matches(const MedicalRule& rule, const EventPattern& hypothesized);

// Orders "2" before "10" and "5.1" before "5.2"; non-digit runs compare
// lexicographically.
bool natural_less(std::string_view a, std::string_view b);

} // namespace imdpm
