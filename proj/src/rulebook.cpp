#include "imdpm/rulebook.hpp"

#include "imdpm/errors.hpp"
#include "resources.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>

namespace imdpm {

EventPattern EventPattern::labeled(ArrhythmiaKind kind, ResponseLabel label)
{
    EventPattern p;
    p.kind = Kind::labeled_arrhythmia;
    p.arrhythmia = kind;
    p.label = label;
    return p;
}

EventPattern EventPattern::plain(ArrhythmiaKind kind)
{
    EventPattern p;
    p.kind = Kind::arrhythmia;
    p.arrhythmia = kind;
    return p;
}

EventPattern EventPattern::heart_death()
{
    return EventPattern{};
}

EventPattern EventPattern::unobservable(std::string name)
{
    EventPattern p;
    p.kind = Kind::unobservable;
    p.name = std::move(name);
    return p;
}

bool EventPattern::matches(const MedicalEvent& ev) const
{
    switch (kind) {
    case Kind::labeled_arrhythmia: return ev.is_arrhythmia() && ev.arrhythmia == arrhythmia && ev.label == label;
    case Kind::arrhythmia: return ev.is_arrhythmia() && ev.arrhythmia == arrhythmia;
    case Kind::heart_death: return ev.is_heart_death();
    case Kind::unobservable: return false;
    }
    return false;
}

bool EventPattern::matches(const EventPattern& other) const
{
    switch (kind) {
    case Kind::labeled_arrhythmia: return other.kind == kind && other.arrhythmia == arrhythmia && other.label == label;
    case Kind::arrhythmia:
        return (other.kind == Kind::arrhythmia || other.kind == Kind::labeled_arrhythmia) &&
               other.arrhythmia == arrhythmia;
    case Kind::heart_death: return other.kind == Kind::heart_death;
    case Kind::unobservable: return other.kind == Kind::unobservable && other.name == name;
    }
    return false;
}

std::string EventPattern::to_dsl() const
{
    switch (kind) {
    case Kind::labeled_arrhythmia:
        return std::string(to_string(arrhythmia)) + "[" + std::string(to_string(label)) + "]";
    case Kind::arrhythmia: return std::string(to_string(arrhythmia));
    case Kind::heart_death: return "HD";
    case Kind::unobservable: return "@" + name;
    }
    return {};
}

bool MedicalRule::premise_unobservable_only() const
{
    return std::none_of(premise.begin(), premise.end(), [](const EventPattern& p) { return p.observable(); });
}

const MedicalRule* RuleSet::find(std::string_view id) const
{
    for (const auto& r : rules)
        if (r.id == id)
            return &r;
    return nullptr;
}

void RuleSet::validate() const
{
    std::set<std::string> seen;
    for (const auto& r : rules) {
        if (r.id.empty())
            throw ValidationError("rule with empty id");
        if (!seen.insert(r.id).second)
            throw ValidationError("duplicate rule id '" + r.id + "'");
        if (r.premise.empty())
            throw ValidationError("rule " + r.id + " has an empty premise");
        if (r.n < 1 || r.m < 1)
            throw ValidationError("rule " + r.id + ": repetition counts must be at least 1");
        if (r.window.millis <= 0)
            throw ValidationError("rule " + r.id + ": window must be positive");
        auto check = [&](const EventPattern& p) {
            if (p.kind == EventPattern::Kind::unobservable && !vocabulary.contains(p.name))
                throw ValidationError("rule " + r.id + ": unobservable event '" + p.name +
                                      "' is not declared in the vocab header");
        };
        for (const auto& p : r.premise)
            check(p);
        check(r.consequent);
    }
}

namespace {

class RuleParser
{
public:
    RuleParser(std::string_view line, std::size_t line_no) : _line(line), _line_no(line_no) {}

    [[noreturn]] void fail(const std::string& message) const
    {
        throw ParseError("rules: " + message, _line_no, _pos + 1);
    }

    void skip_space()
    {
        while (_pos < _line.size() && std::isspace(static_cast<unsigned char>(_line[_pos])))
            ++_pos;
    }

    bool at_end()
    {
        skip_space();
        return _pos >= _line.size();
    }

    bool peek(std::string_view token)
    {
        skip_space();
        return _line.substr(_pos, token.size()) == token;
    }

    bool accept(std::string_view token)
    {
        if (!peek(token))
            return false;
        _pos += token.size();
        return true;
    }

    void expect(std::string_view token)
    {
        if (!accept(token))
            fail("expected '" + std::string(token) + "'");
    }

    std::string word()
    {
        skip_space();
        auto start = _pos;
        while (_pos < _line.size() &&
               (std::isalnum(static_cast<unsigned char>(_line[_pos])) || _line[_pos] == '_' || _line[_pos] == '.' ||
                _line[_pos] == '-'))
            ++_pos;
        if (start == _pos)
            fail("expected an identifier");
        return std::string(_line.substr(start, _pos - start));
    }

    std::int64_t integer()
    {
        skip_space();
        auto start = _pos;
        std::int64_t value = 0;
        auto [ptr, ec] = std::from_chars(_line.data() + _pos, _line.data() + _line.size(), value);
        if (ec != std::errc()) {
            _pos = start;
            fail("expected an integer");
        }
        _pos = static_cast<std::size_t>(ptr - _line.data());
        return value;
    }

    int count()
    {
        auto at = _pos;
        auto v = integer();
        if (v < 1 || v > std::numeric_limits<int>::max()) {
            _pos = at;
            skip_space();
            fail("repetition count must be at least 1");
        }
        return static_cast<int>(v);
    }

    EventPattern pattern()
    {
        skip_space();
        auto start = _pos;
        if (accept("@")) {
            auto name = identifier();
            return EventPattern::unobservable(name);
        }
        auto token = identifier();
        if (token == "HD")
            return EventPattern::heart_death();
        auto kind = try_parse_arrhythmia(token);
        if (!kind) {
            _pos = start;
            fail("unknown arrhythmia '" + token + "'");
        }
        if (accept("[")) {
            skip_space();
            auto label_at = _pos;
            auto label_token = identifier();
            auto label = try_parse_label(label_token);
            if (!label) {
                _pos = label_at;
                fail("unknown response label '" + label_token + "'");
            }
            expect("]");
            return EventPattern::labeled(*kind, *label);
        }
        return EventPattern::plain(*kind);
    }

private:
    std::string identifier()
    {
        skip_space();
        auto start = _pos;
        while (_pos < _line.size() &&
               (std::isalnum(static_cast<unsigned char>(_line[_pos])) || _line[_pos] == '_'))
            ++_pos;
        if (start == _pos)
            fail("expected an event pattern");
        return std::string(_line.substr(start, _pos - start));
    }

    std::string_view _line;
    std::size_t _line_no;
    std::size_t _pos = 0;
};

struct Alternative
{
    std::vector<EventPattern> premise;
    std::optional<int> n;
};

Alternative parse_alternative(RuleParser& p)
{
    Alternative alt;
    bool grouped = p.accept("(");
    alt.premise.push_back(p.pattern());
    while (p.accept(","))
        alt.premise.push_back(p.pattern());
    if (grouped)
        p.expect(")");
    if (p.accept("^"))
        alt.n = p.count();
    return alt;
}

std::vector<MedicalRule> parse_rule_line(RuleParser& p, Duration default_window)
{
    p.expect("rule");
    auto id = p.word();
    std::optional<int> header_n;
    std::optional<int> header_m;
    if (p.accept("^"))
        header_n = p.count();
    if (p.accept("*"))
        header_m = p.count();
    p.expect(":");

    std::vector<Alternative> alternatives{parse_alternative(p)};
    while (p.accept("|"))
        alternatives.push_back(parse_alternative(p));

    Duration window = default_window;
    if (p.accept("-T->")) {
    } else if (p.accept("-T=")) {
        window = Duration{p.integer()};
        if (window.millis <= 0)
            p.fail("window must be positive");
        p.expect("->");
    } else {
        p.fail("expected '-T->' or '-T=<millis>->'");
    }

    EventPattern consequent;
    std::optional<int> m;
    if (p.accept("(")) {
        consequent = p.pattern();
        p.expect(")");
        if (p.accept("^"))
            m = p.count();
    } else {
        consequent = p.pattern();
        if (p.accept("^"))
            m = p.count();
    }
    if (!p.at_end())
        p.fail("unexpected trailing input");
    if (header_m && m && *header_m != *m)
        p.fail("conflicting consequent repetition counts");

    std::vector<MedicalRule> out;
    for (std::size_t i = 0; i < alternatives.size(); ++i) {
        auto& alt = alternatives[i];
        if (header_n && alt.n && *header_n != *alt.n)
            p.fail("conflicting premise repetition counts for rule " + id);
        MedicalRule r;
        r.id = alternatives.size() == 1 ? id : id + "." + std::to_string(i + 1);
        r.premise = std::move(alt.premise);
        r.n = alt.n.value_or(header_n.value_or(1));
        r.consequent = consequent;
        r.m = m.value_or(header_m.value_or(1));
        r.window = window;
        out.push_back(std::move(r));
    }
    return out;
}

constexpr std::string_view rule11_note =
    "The prose for this rule describes a missing response (AR) while its formula reads ST, IR; the formula is "
    "encoded and the mismatch is left open.";

} // namespace

RuleSet parse_rules(std::string_view text, Duration default_window)
{
    RuleSet set;
    std::vector<std::pair<std::size_t, std::string>> origin; // line of each rule, for error reporting
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(start, end - start);
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);

        RuleParser p(line, line_no);
        if (!p.at_end()) {
            if (p.peek("vocab")) {
                p.expect("vocab");
                if (p.at_end())
                    p.fail("vocab header without names");
                while (!p.at_end()) {
                    auto name = p.word();
                    set.vocabulary.insert(name);
                }
            } else if (p.peek("rule")) {
                for (auto& r : parse_rule_line(p, default_window)) {
                    if (set.find(r.id))
                        throw ParseError("rules: duplicate rule id '" + r.id + "'", line_no, 1);
                    origin.emplace_back(line_no, r.id);
                    set.rules.push_back(std::move(r));
                }
            } else {
                p.fail("expected 'rule' or 'vocab'");
            }
        }
        if (end == text.size())
            break;
        start = end + 1;
    }

    for (std::size_t i = 0; i < set.rules.size(); ++i) {
        const auto& r = set.rules[i];
        auto check = [&](const EventPattern& pat) {
            if (pat.kind == EventPattern::Kind::unobservable && !set.vocabulary.contains(pat.name))
                throw ParseError("rules: unobservable event '" + pat.name + "' is not declared in a vocab header",
                                 origin[i].first, 1);
        };
        for (const auto& pat : r.premise)
            check(pat);
        check(r.consequent);
    }
    set.validate();
    return set;
}

std::string serialize_rules(const RuleSet& rules)
{
    std::string out;
    if (!rules.vocabulary.empty()) {
        out += "vocab";
        for (const auto& name : rules.vocabulary)
            out += " " + name;
        out += "\n";
    }
    for (const auto& r : rules.rules) {
        std::string premise;
        for (std::size_t i = 0; i < r.premise.size(); ++i) {
            if (i > 0)
                premise += ", ";
            premise += r.premise[i].to_dsl();
        }
        if (r.n > 1)
            premise = "(" + premise + ")^" + std::to_string(r.n);
        auto consequent = r.consequent.to_dsl();
        if (r.m > 1)
            consequent = "(" + consequent + ")^" + std::to_string(r.m);
        out += "rule " + r.id + ": " + premise + " -T=" + std::to_string(r.window.millis) + "-> " + consequent + "\n";
    }
    return out;
}

std::string_view builtin_rules_text()
{
    return resources::builtin_rules_text;
}

RuleSet builtin_rules(int repetitions, Duration window)
{
    if (repetitions < 1)
        throw ValidationError("rule 12 repetition count must be at least 1");
    auto set = parse_rules(builtin_rules_text());
    for (auto& r : set.rules) {
        r.window = window;
        if (r.id == "12")
            r.n = repetitions;
        if (r.id == "11")
            r.note = std::string(rule11_note);
    }
    set.validate();
    return set;
}

EventPattern parse_pattern(std::string_view text)
{
    RuleParser p(text, 1);
    auto pattern = p.pattern();
    if (!p.at_end())
        p.fail("unexpected trailing input");
    return pattern;
}

bool consequent_matches(const MedicalRule& rule, const MedicalEvent& ev)
{
    return rule.consequent.matches(ev);
}

bool consequent_matches(const MedicalRule& rule, const EventPattern& hypothesized)
{
    return rule.consequent.matches(hypothesized);
}

bool natural_less(std::string_view a, std::string_view b)
{
    std::size_t i = 0;
    std::size_t j = 0;
    auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
    while (i < a.size() && j < b.size()) {
        if (digit(a[i]) && digit(b[j])) {
            auto si = i;
            auto sj = j;
            while (i < a.size() && digit(a[i]))
                ++i;
            while (j < b.size() && digit(b[j]))
                ++j;
            auto na = a.substr(si, i - si);
            auto nb = b.substr(sj, j - sj);
            while (na.size() > 1 && na.front() == '0')
                na.remove_prefix(1);
            while (nb.size() > 1 && nb.front() == '0')
                nb.remove_prefix(1);
            if (na.size() != nb.size())
                return na.size() < nb.size();
            if (na != nb)
                return na < nb;
        } else {
            if (a[i] != b[j])
                return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    if ((a.size() - i) != (b.size() - j))
        return (a.size() - i) < (b.size() - j);
    return a < b;
}

} // namespace imdpm
