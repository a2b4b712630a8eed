#include "generators.hpp"

#include "imdpm/errors.hpp"
#include "imdpm/rulebook.hpp"

#include <doctest.h>

using namespace imdpm;
using namespace imdpm::testing;

TEST_CASE("builtin rules")
{
    auto rules = builtin_rules();
    REQUIRE(rules.rules.size() == 12);
    const auto* r12 = rules.find("12");
    REQUIRE(r12);
    CHECK(r12->n == 6);
    CHECK(r12->premise == std::vector<EventPattern>{EventPattern::labeled(ArrhythmiaKind::ST, ResponseLabel::IR)});
    CHECK(r12->consequent == EventPattern::plain(ArrhythmiaKind::VF));
    CHECK(rules.find("3")->consequent == EventPattern::heart_death());
    CHECK_FALSE(rules.find("11")->note.empty());
    CHECK(builtin_rules() == rules);
    CHECK(builtin_rules(4).find("12")->n == 4);
}

TEST_CASE("builtin rule file normalizes to itself")
{
    auto text = std::string(builtin_rules_text());
    CHECK(serialize_rules(parse_rules(text)) == text);
    CHECK(parse_rules(text) == builtin_rules());
}

TEST_CASE("rule DSL forms")
{
    auto rules = parse_rules("vocab APE syncope\n"
                             "# comment\n"
                             "rule 1: VF[AR] -T-> VF\n"
                             "rule 2: ST[IR], VT ^2 -T=30000-> (VF)^2\n"
                             "rule 3: VF[AR] | VF[IR] -T-> @APE\n",
                             Duration{45'000});
    REQUIRE(rules.rules.size() == 4);
    CHECK(rules.vocabulary == std::set<std::string>{"APE", "syncope"});
    CHECK(rules.find("1")->window == Duration{45'000});
    const auto* r2 = rules.find("2");
    REQUIRE(r2);
    CHECK(r2->premise.size() == 2);
    CHECK(r2->n == 2);
    CHECK(r2->m == 2);
    CHECK(r2->window == Duration{30'000});
    CHECK(rules.find("3.1")->premise.front() == EventPattern::labeled(ArrhythmiaKind::VF, ResponseLabel::AR));
    CHECK(rules.find("3.2")->premise.front() == EventPattern::labeled(ArrhythmiaKind::VF, ResponseLabel::IR));
    CHECK(rules.find("3.2")->consequent == EventPattern::unobservable("APE"));
    CHECK(parse_rules(serialize_rules(rules)) == rules);
}

TEST_CASE("rule DSL errors carry positions")
{
    auto expect_error = [](const std::string& text, std::size_t line) {
        try {
            parse_rules(text);
            FAIL("expected a parse error for: " << text);
        } catch (const ParseError& e) {
            CHECK(e.line() == line);
            CHECK(e.column() > 0);
        }
    };
    expect_error("rule 1: VF[AR] -T-> VF\nrule 2: VF[XX] -T-> HD\n", 2);
    expect_error("rule 1: @APE -T-> VF\n", 1);
    expect_error("rule 1: VF[AR] VF\n", 1);
    expect_error("rule 1: (VF[AR])^0 -T-> VF\n", 1);
    expect_error("rule 1: VF -T-> VF\nrule 1: VT -T-> VF\n", 2);
}

TEST_CASE("serialization round trip on random rule sets")
{
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        auto c = random_medical_case(rng);
        auto text = serialize_rules(c.rules);
        CHECK(parse_rules(text) == c.rules);
    }
}

TEST_CASE("consequent matching ignores timestamps")
{
    auto rules = builtin_rules();
    for (const auto& r : rules.rules) {
        for (auto kind : all_arrhythmia_kinds) {
            for (auto label : {ResponseLabel::OK, ResponseLabel::IR, ResponseLabel::AR}) {
                auto early = MedicalEvent::make_arrhythmia({0}, kind, label);
                auto late = MedicalEvent::make_arrhythmia({987'654'321}, kind, label);
                CHECK(consequent_matches(r, early) == consequent_matches(r, late));
            }
        }
        CHECK(consequent_matches(r, MedicalEvent::make_heart_death({1})) ==
              consequent_matches(r, MedicalEvent::make_heart_death({99'999})));
    }
    CHECK(consequent_matches(*rules.find("3"), MedicalEvent::make_heart_death({1})));
    CHECK(consequent_matches(*rules.find("1"),
                             MedicalEvent::make_arrhythmia({1}, ArrhythmiaKind::VF, ResponseLabel::AR)));
    CHECK_FALSE(consequent_matches(*rules.find("1"), MedicalEvent::make_heart_death({1})));
}

TEST_CASE("natural ordering of rule ids")
{
    CHECK(natural_less("2", "10"));
    CHECK(natural_less("5.1", "5.2"));
    CHECK(natural_less("5", "5.1"));
    CHECK_FALSE(natural_less("10", "9"));
}
