#pragma once

#include <string_view>

// Data files under data/, embedded at build time.
namespace imdpm::resources {

extern const std::string_view actions_json;
extern const std::string_view builtin_rules_text;
extern const std::string_view causal_table_json;

} // namespace imdpm::resources
