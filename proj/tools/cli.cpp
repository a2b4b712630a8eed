#include "cli.hpp"

#include "imdpm/correlation.hpp"
#include "imdpm/errors.hpp"
#include "imdpm/evidence.hpp"
#include "imdpm/report.hpp"
#include "imdpm/rulebook.hpp"
#include "imdpm/simulator.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace imdpm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view tool_version = "imdpm 0.1.0";

struct Options
{
    std::string evidence;
    std::string rules;
    std::string actions;
    std::string causal_table;
    std::string out = "imdpm-out";
    std::vector<std::string> formats{"json", "dot"};
    std::vector<std::string> initial_states;
    std::string script;
    std::string medical_scenarios;
    std::string technical_scenarios;
    InferenceConfig inference;
    SearchBounds bounds;
    std::int64_t default_window_ms = default_rule_window.millis;
    std::int64_t max_age_ms = InferenceConfig{}.max_age.millis;
};

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(path + ": cannot open file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

template <typename F>
auto in_file(const std::string& path, F&& parse)
{
    try {
        return parse();
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), 0, 0);
    } catch (const Error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

// Loaded inputs plus the text they came from, for provenance.
struct Loaded
{
    std::string evidence_text;
    EvidenceBundle bundle;
    std::string rules_text;
    RuleSet rules;
    std::string actions_text;
    ActionLibrary actions;
    std::string table_text;
    CausalTable table;
    std::vector<WorldState> initial_states;
    std::vector<std::string> initial_texts;
};

void load_rules(const Options& o, Loaded& l)
{
    if (o.rules.empty()) {
        l.rules_text = std::string(builtin_rules_text());
        l.rules = builtin_rules(6, o.inference.default_window);
    } else {
        l.rules_text = read_file(o.rules);
        l.rules = in_file(o.rules, [&] { return parse_rules(l.rules_text, o.inference.default_window); });
    }
}

void load_actions(const Options& o, Loaded& l)
{
    if (o.actions.empty()) {
        l.actions_text = std::string(builtin_actions_text());
        l.actions = builtin_actions();
    } else {
        l.actions_text = read_file(o.actions);
        l.actions = in_file(o.actions, [&] { return ActionLibrary::parse(l.actions_text); });
    }
}

void load_table(const Options& o, Loaded& l)
{
    if (o.causal_table.empty()) {
        l.table_text = std::string(CausalTable::builtin_text());
        l.table = CausalTable::builtin();
    } else {
        l.table_text = read_file(o.causal_table);
        l.table = in_file(o.causal_table, [&] { return CausalTable::parse(l.table_text); });
    }
}

void load_evidence(const Options& o, Loaded& l)
{
    if (o.evidence.empty())
        throw ValidationError("--evidence is required");
    l.evidence_text = read_file(o.evidence);
    l.bundle = in_file(o.evidence, [&] { return parse_evidence_bundle(l.evidence_text); });
    for (const auto& path : o.initial_states) {
        auto text = read_file(path);
        l.initial_states.push_back(
            in_file(path, [&] { return parse_json_document(text, "initial state").get<WorldState>(); }));
        l.initial_texts.push_back(std::move(text));
    }
}

json provenance(std::string_view command, const Options& o, const Loaded& l)
{
    json inputs = json::object();
    if (!l.evidence_text.empty())
        inputs["evidence_sha256"] = sha256_hex(l.evidence_text);
    if (!l.rules_text.empty())
        inputs["rules_sha256"] = sha256_hex(l.rules_text);
    if (!l.actions_text.empty())
        inputs["actions_sha256"] = sha256_hex(l.actions_text);
    if (!l.table_text.empty())
        inputs["causal_table_sha256"] = sha256_hex(l.table_text);
    if (!l.initial_texts.empty()) {
        json hashes = json::array();
        for (const auto& t : l.initial_texts)
            hashes.push_back(sha256_hex(t));
        inputs["initial_states_sha256"] = hashes;
    }
    json config = {{"command", command},
                   {"formats", o.formats},
                   {"max_invisible_run", o.bounds.max_invisible_run},
                   {"max_total_steps", o.bounds.max_total_steps},
                   {"max_scenarios", o.bounds.max_scenarios},
                   {"strict_payload", o.bounds.strict_payload},
                   {"max_depth", o.inference.max_depth},
                   {"max_age_ms", o.inference.max_age.millis},
                   {"max_unobservable_chain", o.inference.max_unobservable_chain},
                   {"default_window_ms", o.inference.default_window.millis},
                   {"skip_ok_events", o.inference.skip_ok_events},
                   {"inputs", inputs}};
    return {{"tool", tool_version}, {"config_sha256", sha256_hex(config.dump())}, {"config", config}};
}

class Writer
{
public:
    Writer(const Options& o, json provenance) : _o(o), _provenance(std::move(provenance))
    {
        fs::create_directories(o.out);
    }

    bool wants(std::string_view format) const
    {
        return std::find(_o.formats.begin(), _o.formats.end(), format) != _o.formats.end();
    }

    void json_file(const std::string& name, json body) const
    {
        body["provenance"] = _provenance;
        write(name, body.dump(2) + "\n");
    }

    void dot_file(const std::string& name, const std::string& dot) const
    {
        std::string header = "// " + std::string(tool_version) + "\n// config sha256 " +
                             _provenance.at("config_sha256").get<std::string>() + "\n";
        write(name, header + dot);
    }

    void write(const std::string& name, const std::string& content) const
    {
        auto path = fs::path(_o.out) / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(path.string() + ": cannot write file");
        out << content;
        spdlog::info("wrote {}", path.string());
    }

private:
    const Options& _o;
    json _provenance;
};

void write_medical(const Writer& w, const ScenarioNode& tree, const std::vector<MedicalScenario>& scenarios)
{
    if (w.wants("json"))
        w.json_file("medical_tree.json", {{"tree", tree_to_json(tree)}, {"scenario_count", scenarios.size()}});
    if (w.wants("dot"))
        w.dot_file("medical_tree.dot", tree_to_dot(tree));
    w.json_file("medical_scenarios.json", medical_scenarios_to_json(scenarios));
}

void write_technical(const Writer& w, const ScenarioGraph& g, const ScenarioList& list, const ActionLibrary& lib)
{
    if (w.wants("json")) {
        json body = graph_to_json(g);
        body["scenario_count"] = list.scenarios.size();
        body["truncated"] = list.truncated;
        w.json_file("scenario_graph.json", body);
    }
    if (w.wants("dot"))
        w.dot_file("scenario_graph.dot", graph_to_dot(g));
    w.json_file("technical_scenarios.json", technical_scenarios_to_json(list, lib));
}

int write_verdict(const Writer& w, const CorrelationReport& report, const std::vector<MedicalScenario>& medical,
                  const ScenarioList& technical)
{
    int code = exit_ok;
    std::string outcome = std::string(to_string(report.status));
    if (technical.scenarios.empty()) {
        code = exit_no_technical_scenario;
        outcome = "no_technical_scenario";
    } else if (report.status == VerdictStatus::uncorrelatable) {
        code = exit_uncorrelatable;
    }
    json body = correlation_report_json(report, medical, technical);
    body["outcome"] = outcome;
    body["exit_code"] = code;
    w.json_file("verdict.json", body);
    std::string text = correlation_report_text(report, medical, technical);
    if (technical.scenarios.empty())
        text = "No technical scenario explains the technical evidence.\n" + text;
    w.write("verdict.txt", text);
    return code;
}

int cmd_investigate(const Options& o, std::ostream& out)
{
    Loaded l;
    load_evidence(o, l);
    load_rules(o, l);
    load_actions(o, l);
    load_table(o, l);
    Writer w(o, provenance("investigate", o, l));

    InvestigationInputs inputs{l.rules, l.actions, l.table, o.inference, o.bounds, l.initial_states};
    auto r = investigate(l.bundle, inputs);
    spdlog::info("medical tree: {} nodes, {} scenarios", r.tree.size(), r.medical.size());
    spdlog::info("scenario graph: {} states, {} edges, {} scenarios", r.graph.nodes.size(), r.graph.edges.size(),
                 r.technical.scenarios.size());
    write_medical(w, r.tree, r.medical);
    write_technical(w, r.graph, r.technical, l.actions);
    int code = write_verdict(w, r.correlation, r.medical, r.technical);
    out << "verdict: " << (r.technical.scenarios.empty() ? "no_technical_scenario" : to_string(r.correlation.status))
        << " (" << r.medical.size() << " medical, " << r.technical.scenarios.size() << " technical scenarios)\n";
    return code;
}

int cmd_medical(const Options& o, std::ostream& out)
{
    Loaded l;
    load_evidence(o, l);
    load_rules(o, l);
    Writer w(o, provenance("medical", o, l));
    auto labeled = labeled_medical_log(l.bundle);
    auto tree = infer_tree(labeled, l.rules, o.inference);
    auto scenarios = enumerate_scenarios(tree);
    write_medical(w, tree, scenarios);
    out << "medical tree: " << tree.size() << " nodes, " << scenarios.size() << " scenarios\n";
    return exit_ok;
}

int cmd_technical(const Options& o, std::ostream& out)
{
    Loaded l;
    load_evidence(o, l);
    load_actions(o, l);
    Writer w(o, provenance("technical", o, l));
    auto initials = l.initial_states.empty() ? std::vector<WorldState>{l.bundle.initial_state} : l.initial_states;
    auto g = reconstruct(initials, l.bundle.technical, l.actions, o.bounds);
    auto list = scenarios_of(g, o.bounds);
    write_technical(w, g, list, l.actions);
    out << "scenario graph: " << g.nodes.size() << " states, " << list.scenarios.size() << " scenarios"
        << (list.truncated ? " (truncated)" : "") << "\n";
    return list.scenarios.empty() ? exit_no_technical_scenario : exit_ok;
}

int cmd_correlate(const Options& o, std::ostream& out)
{
    Loaded l;
    load_evidence(o, l);
    load_actions(o, l);
    load_table(o, l);
    auto medical_path = o.medical_scenarios.empty() ? (fs::path(o.out) / "medical_scenarios.json").string()
                                                    : o.medical_scenarios;
    auto technical_path = o.technical_scenarios.empty() ? (fs::path(o.out) / "technical_scenarios.json").string()
                                                        : o.technical_scenarios;
    auto labeled = labeled_medical_log(l.bundle);
    auto medical_text = read_file(medical_path);
    auto medical = in_file(medical_path, [&] {
        return medical_scenarios_from_json(parse_json_document(medical_text, "medical scenarios"), labeled);
    });
    auto technical_text = read_file(technical_path);
    auto technical = in_file(technical_path, [&] {
        return technical_scenarios_from_json(parse_json_document(technical_text, "technical scenarios"), l.actions);
    });
    Writer w(o, provenance("correlate", o, l));
    auto report = correlate_all(medical, technical, labeled, l.actions, l.bundle.expectation, l.table);
    int code = write_verdict(w, report, medical, technical);
    out << "verdict: " << (technical.scenarios.empty() ? "no_technical_scenario" : to_string(report.status)) << "\n";
    return code;
}

int cmd_simulate(const Options& o, std::ostream& out)
{
    if (o.script.empty())
        throw ValidationError("--script is required");
    Loaded l;
    load_actions(o, l);
    auto text = read_file(o.script);
    auto script = in_file(o.script, [&] { return parse_script(text); });
    auto expectation = script.expectation.value_or(TherapyExpectation::defaults());
    auto bundle = in_file(o.script, [&] { return simulate(script, l.actions, expectation); });
    fs::create_directories(o.out);
    auto path = fs::path(o.out) / "evidence.json";
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file)
        throw Error(path.string() + ": cannot write file");
    file << serialize_evidence_bundle(bundle);
    out << "evidence bundle: " << path.string() << " (" << bundle.technical.size() << " technical, "
        << bundle.medical.events.size() << " medical events)\n";
    return exit_ok;
}

int cmd_rules_check(const Options& o, std::ostream& out)
{
    Loaded l;
    load_rules(o, l);
    out << serialize_rules(l.rules);
    return exit_ok;
}

void configure_logging()
{
    auto logger = spdlog::stderr_logger_st("imdpm");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("imdpm [%l] %v");
    const char* level = std::getenv("IMDPM_LOG");
    spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    if (!spdlog::get("imdpm"))
        configure_logging();

    CLI::App app{"Postmortem investigation of attacks on implantable cardiac devices", "imdpm"};
    app.require_subcommand(1);
    Options o;

    auto add_inputs = [&](CLI::App* sub, bool evidence) {
        if (evidence)
            sub->add_option("--evidence", o.evidence, "Evidence bundle (JSON)")->required();
        sub->add_option("--actions", o.actions, "Action library (JSON); builtin when omitted");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--format", o.formats, "Report formats")->delimiter(',')->check(CLI::IsMember({"json", "dot"}));
    };
    auto add_medical = [&](CLI::App* sub) {
        sub->add_option("--rules", o.rules, "Rule file; builtin rules when omitted");
        sub->add_option("--max-depth", o.inference.max_depth, "Deepest medical tree node")->check(CLI::PositiveNumber);
        sub->add_option("--max-age", o.max_age_ms, "Oldest bindable evidence before the heart death, ms")
            ->check(CLI::PositiveNumber);
        sub->add_option("--max-unobservable-chain", o.inference.max_unobservable_chain,
                        "Consecutive all-unobservable rule applications")
            ->check(CLI::NonNegativeNumber);
        sub->add_flag("--skip-ok-events", o.inference.skip_ok_events, "Let premises skip OK-labeled episodes");
        sub->add_option("--default-window", o.default_window_ms, "Window for rules written -T->, ms")
            ->check(CLI::PositiveNumber);
    };
    auto add_technical = [&](CLI::App* sub) {
        sub->add_option("--initial-state", o.initial_states, "Candidate initial state (JSON); repeatable");
        sub->add_option("--max-invisible-run", o.bounds.max_invisible_run, "Consecutive invisible actions")
            ->check(CLI::PositiveNumber);
        sub->add_option("--max-steps", o.bounds.max_total_steps, "Actions per scenario")->check(CLI::PositiveNumber);
        sub->add_option("--max-scenarios", o.bounds.max_scenarios, "Scenarios reported")->check(CLI::PositiveNumber);
        sub->add_flag("--strict-payload", o.bounds.strict_payload, "Compare therapy change values too");
    };
    auto add_correlation = [&](CLI::App* sub) {
        sub->add_option("--causal-table", o.causal_table, "Causal-link table (JSON); builtin when omitted");
    };

    auto* investigate_cmd = app.add_subcommand("investigate", "Run the full investigation");
    add_inputs(investigate_cmd, true);
    add_medical(investigate_cmd);
    add_technical(investigate_cmd);
    add_correlation(investigate_cmd);

    auto* medical_cmd = app.add_subcommand("medical", "Infer medical scenarios");
    add_inputs(medical_cmd, true);
    add_medical(medical_cmd);

    auto* technical_cmd = app.add_subcommand("technical", "Reconstruct technical scenarios");
    add_inputs(technical_cmd, true);
    add_technical(technical_cmd);

    auto* correlate_cmd = app.add_subcommand("correlate", "Correlate stored medical and technical scenarios");
    add_inputs(correlate_cmd, true);
    add_correlation(correlate_cmd);
    correlate_cmd->add_option("--medical-scenarios", o.medical_scenarios,
                              "medical_scenarios.json; defaults to the output directory");
    correlate_cmd->add_option("--technical-scenarios", o.technical_scenarios,
                              "technical_scenarios.json; defaults to the output directory");

    auto* simulate_cmd = app.add_subcommand("simulate", "Run a scenario script and write an evidence bundle");
    add_inputs(simulate_cmd, false);
    simulate_cmd->add_option("--script", o.script, "Scenario script (JSON)")->required();

    auto* rules_cmd = app.add_subcommand("rules-check", "Parse a rule file and print its normalized form");
    rules_cmd->add_option("--rules", o.rules, "Rule file; builtin rules when omitted");
    rules_cmd->add_option("--default-window", o.default_window_ms, "Window for rules written -T->, ms")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_error;
    }
    o.inference.default_window = Duration{o.default_window_ms};
    o.inference.max_age = Duration{o.max_age_ms};

    const std::map<CLI::App*, std::function<int(const Options&, std::ostream&)>> commands = {
        {investigate_cmd, cmd_investigate}, {medical_cmd, cmd_medical},   {technical_cmd, cmd_technical},
        {correlate_cmd, cmd_correlate},     {simulate_cmd, cmd_simulate}, {rules_cmd, cmd_rules_check},
    };
    try {
        for (const auto& [sub, command] : commands)
            if (sub->parsed())
                return command(o, out);
    } catch (const std::exception& e) {
        err << "imdpm: " << e.what() << "\n";
        return exit_error;
    }
    return exit_error;
}

} // namespace imdpm::cli
