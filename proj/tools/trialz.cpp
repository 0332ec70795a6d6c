#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "trialz/pipeline.hpp"

namespace {

struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::map<std::string, std::string> direct;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("-c,--config", f.config, "key=value configuration file");
    sub->add_option("--set", f.sets, "override a setting (key=value), repeatable");
    for (const char* key : {"trials", "outcomes", "rankings", "sponsor_parents", "synonyms", "mesh_tree",
                            "categories", "links", "output", "seed", "threads", "bootstrap_reps", "split_criterion",
                            "split_k", "sidedness", "cutoff", "rank", "order", "bandwidth", "bin_width"}) {
        std::string flag = "--" + std::string(key);
        for (auto& ch : flag)
            if (ch == '_') ch = '-';
        if (std::string(key) == "output") flag = "-o," + flag;
        sub->add_option_function<std::string>(flag, [&f, key](const std::string& v) { f.direct[key] = v; },
                                               std::string("setting ") + key);
    }
}

const std::map<std::string, std::string> kDescriptions = {
    {"ingest", "validate and filter the registry extract"},
    {"transform", "convert p-values to z-scores"},
    {"density", "z-score densities with bootstrap bands"},
    {"disctest", "density discontinuity tests at the cutoff"},
    {"link", "link phase II trials to phase III follow-ups"},
    {"fit-selection", "fit the continuation logit"},
    {"decompose", "split the phase II/III gap into selection and residual"},
    {"sweep", "repeat tests and decomposition across sponsor splits"},
    {"simulate", "write a simulated registry with ground truth"},
    {"report", "run every stage (simulating data if no inputs are given)"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective continuation and reporting bias in clinical trial registries"};
    app.set_version_flag("--version", std::string(trialz::kVersion));
    app.require_subcommand(1);
    Flags flags;
    for (const auto& name : trialz::kSubcommands) add_common(app.add_subcommand(name, kDescriptions.at(name)), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        trialz::PipelineConfig config;
        if (!flags.config.empty()) trialz::load_config_file(config, flags.config);
        for (const auto& s : flags.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw trialz::UsageError("--set expects key=value, got '" + s + "'");
            trialz::apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [k, v] : flags.direct) trialz::apply_setting(config, k, v);
        trialz::run(sub, config);
    } catch (const trialz::UsageError& e) {
        std::cerr << "trialz " << sub << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "trialz " << sub << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}
