#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "trialz/registry.hpp"

namespace fixtures {

inline std::filesystem::path dir() { return TRIALZ_FIXTURES; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const char* kTrialsHeader =
    "trial_id,phase,sponsor_name,sponsor_class,interventions,mesh_conditions,start_date,completion_date,"
    "enrollment,placebo_comparator,study_type\n";
inline const char* kOutcomesHeader = "trial_id,outcome_rank,p_kind,p_value,mht_adjusted\n";
inline const char* kRankingsHeader = "sponsor_name,criterion,rank\n";

inline trialz::Registry load(const std::string& trials_body, const std::string& outcomes_body,
                             const std::string& rankings_body = "") {
    return trialz::ingest_text(kTrialsHeader + trials_body, kOutcomesHeader + outcomes_body,
                               kRankingsHeader + rankings_body);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("trialz_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixtures
