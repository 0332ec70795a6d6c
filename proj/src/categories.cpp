#include "trialz/categories.hpp"

#include <algorithm>
#include <cctype>

#include "trialz/csv.hpp"
#include "trialz/error.hpp"
#include "trialz/registry.hpp"

namespace trialz {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) pos = s.size();
        std::string part(s.substr(start, pos - start));
        auto b = part.find_first_not_of(" \t");
        auto e = part.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
        start = pos + 1;
    }
    return out;
}

// "C14.280.647" -> "C14"; anything that is not a tree number -> "".
std::string tree_root(std::string_view term) {
    auto root = term.substr(0, term.find('.'));
    if (root.size() != 3) return {};
    if (root[0] < 'A' || root[0] > 'Z') return {};
    if (!std::isdigit(static_cast<unsigned char>(root[1])) ||
        !std::isdigit(static_cast<unsigned char>(root[2])))
        return {};
    return std::string(root);
}

}  // namespace

CategoryTable CategoryTable::builtin() {
    // Total Medicare Part D spending in 2011, bn USD, for the 15 largest
    // condition groups. Merged groups carry both tree prefixes.
    CategoryTable t;
    t.categories_ = {
        {"C14", "Cardiovascular Diseases", 13.215, {"C14"}},
        {"F03", "Mental Disorders", 12.336, {"F03"}},
        {"C18", "Nutritional and Metabolic Diseases", 8.957, {"C18"}},
        {"C19", "Endocrine System Diseases", 8.45, {"C19"}},
        {"C10", "Nervous System Diseases", 5.956, {"C10"}},
        {"C08/C09", "Respiratory Tract Diseases/Otorhinolaryngologic Diseases", 5.945,
         {"C08", "C09"}},
        {"C06", "Digestive System Diseases", 4.377, {"C06"}},
        {"C05", "Musculoskeletal Diseases", 2.888, {"C05"}},
        {"C04", "Neoplasms", 2.64, {"C04"}},
        {"C12/C13",
         "Male Urogenital Diseases/Female Urogenital Diseases and Pregnancy Complications",
         2.262, {"C12", "C13"}},
        {"C20", "Immune System Diseases", 1.355, {"C20"}},
        {"C23", "Pathological Conditions, Signs and Symptoms", 0.812, {"C23"}},
        {"C17", "Skin and Connective Tissue Diseases", 0.683, {"C17"}},
        {"C25", "Chemically-Induced Disorders", 0.17, {"C25"}},
        {"C16", "Congenital, Hereditary, and Neonatal Diseases and Abnormalities", 0.101,
         {"C16"}},
    };
    return t;
}

CategoryTable CategoryTable::from_csv(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    const auto c_code = table.column("code");
    const auto c_name = table.column("name");
    const auto c_spend = table.column("spending_bn");
    const auto c_prefix = table.column("tree_prefixes");
    CategoryTable t;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        ConditionCategory cat;
        cat.code = row[c_code];
        cat.name = row[c_name];
        try {
            cat.spending_bn = std::stod(row[c_spend]);
        } catch (const std::exception&) {
            throw SchemaError(table.source + ":" + std::to_string(table.lines[r]) +
                              ": column spending_bn: not a number '" + row[c_spend] + "'");
        }
        cat.tree_prefixes = split(row[c_prefix], ';');
        t.categories_.push_back(std::move(cat));
    }
    return t;
}

void CategoryTable::add_mesh_tree(std::string term, std::string tree_number) {
    tree_numbers_[normalize_name(term)].push_back(std::move(tree_number));
}

void CategoryTable::load_mesh_tree(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    const auto c_term = table.column("mesh_term");
    const auto c_tree = table.column("tree_number");
    for (const auto& row : table.rows) add_mesh_tree(row[c_term], row[c_tree]);
}

std::vector<std::string> CategoryTable::match_term(std::string_view term) const {
    std::vector<std::string> roots;
    if (auto root = tree_root(term); !root.empty()) roots.push_back(root);
    const auto key = normalize_name(term);
    if (auto it = tree_numbers_.find(key); it != tree_numbers_.end())
        for (const auto& tn : it->second)
            if (auto root = tree_root(tn); !root.empty()) roots.push_back(root);

    std::vector<std::string> codes;
    for (const auto& cat : categories_) {
        bool hit = std::any_of(cat.tree_prefixes.begin(), cat.tree_prefixes.end(),
                               [&](const std::string& p) {
                                   return std::find(roots.begin(), roots.end(), p) != roots.end();
                               });
        if (!hit)
            for (const auto& alias : split(cat.name, '/'))
                if (normalize_name(alias) == key) hit = true;
        if (hit) codes.push_back(cat.code);
    }
    return codes;
}

std::string CategoryTable::assign(const std::vector<std::string>& mesh_terms) const {
    const ConditionCategory* best = nullptr;
    for (const auto& term : mesh_terms) {
        for (const auto& code : match_term(term)) {
            auto it = std::find_if(categories_.begin(), categories_.end(),
                                   [&](const ConditionCategory& c) { return c.code == code; });
            if (!best || it->spending_bn > best->spending_bn ||
                (it->spending_bn == best->spending_bn && it->code < best->code))
                best = &*it;
        }
    }
    return best ? best->code : std::string(kOtherCategory);
}

}  // namespace trialz
