#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace trialz {

inline constexpr std::string_view kOtherCategory = "Other";

/// One MeSH condition category with its market-size proxy (total Medicare D
/// spending, bn USD).
struct ConditionCategory {
    std::string code;  // e.g. "C14" or merged "C08/C09"
    std::string name;
    double spending_bn = 0.0;
    std::vector<std::string> tree_prefixes;  // e.g. {"C08", "C09"}
};

/// Maps MeSH terms to condition categories. A term is resolved, in order, as
/// a MeSH tree number ("C14.280.647"), a category name, or through the
/// optional term -> tree-number table.
class CategoryTable {
public:
    static CategoryTable builtin();
    /// Columns: code, name, spending_bn, tree_prefixes (semicolon-separated).
    static CategoryTable from_csv(const std::filesystem::path& path);

    void load_mesh_tree(const std::filesystem::path& path);
    void add_mesh_tree(std::string term, std::string tree_number);

    const std::vector<ConditionCategory>& categories() const { return categories_; }

    /// Category codes matched by a single term (possibly several).
    std::vector<std::string> match_term(std::string_view term) const;

    /// Highest-spending matching category; "Other" when nothing matches.
    std::string assign(const std::vector<std::string>& mesh_terms) const;

private:
    std::vector<ConditionCategory> categories_;
    std::map<std::string, std::vector<std::string>> tree_numbers_;  // normalised term
};

}  // namespace trialz
