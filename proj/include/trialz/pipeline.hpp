#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trialz/discontinuity.hpp"
#include "trialz/error.hpp"
#include "trialz/pz.hpp"
#include "trialz/registry.hpp"
#include "trialz/simulate.hpp"

namespace trialz {

inline constexpr std::string_view kVersion = "1.0.0";

class UsageError : public Error {
public:
    using Error::Error;
};

struct PipelineConfig {
    // Inputs. trials/outcomes/rankings are required unless the subcommand
    // is `simulate`, or `report` (which then simulates its own fixture).
    std::optional<std::filesystem::path> trials, outcomes, rankings;
    std::optional<std::filesystem::path> sponsor_parents, synonyms, mesh_tree, categories, links;

    Sidedness sidedness = Sidedness::TwoSided;
    std::optional<double> cutoff;
    /// Discontinuity tests: local polynomial order, a fixed bandwidth for
    /// both sides (plug-in when unset) and the cross-check bin width.
    int order = 2;
    std::optional<double> bandwidth;
    double bin_width = 0.05;
    OutcomeRank rank = OutcomeRank::Primary;
    SponsorSplit split;
    int bootstrap_reps = 500;
    int sweep_bootstrap_reps = 0;
    int band_reps = 200;
    std::uint64_t seed = 20190815;
    unsigned threads = 1;
    std::filesystem::path output = "out";

    SimConfig sim;

    /// Every setting as key=value text (output directory excluded), sorted.
    std::map<std::string, std::string> settings() const;
    double effective_cutoff() const;
    CjmOptions cjm_options() const;
    /// Throws UsageError on out-of-range values.
    void validate() const;
};

/// Applies one key=value setting; throws UsageError on unknown keys or
/// malformed values.
void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value);

/// Reads a key=value file ('#' starts a comment, blank lines ignored).
void load_config_file(PipelineConfig& config, const std::filesystem::path& path);

inline const std::vector<std::string> kSubcommands = {"ingest", "transform", "density", "disctest", "link",
                                                      "fit-selection", "decompose", "sweep", "simulate", "report"};

/// Runs one subcommand, writing CSV/SVG outputs and manifest.json into
/// config.output. Throws UsageError for an unknown subcommand and the
/// module's exception otherwise.
void run(const std::string& subcommand, const PipelineConfig& config);

std::string sha256_hex(const std::filesystem::path& file);

}  // namespace trialz
