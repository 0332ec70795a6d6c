#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "trialz/linker.hpp"

using namespace trialz;

namespace {

std::string row(const std::string& id, const std::string& phase, const std::string& interventions,
                const std::string& mesh, const std::string& start, const std::string& end,
                const std::string& sponsor = "Acme Pharma", const std::string& cls = "Industry") {
    return id + "," + phase + "," + sponsor + "," + cls + "," + interventions + "," + mesh + "," + start + "," +
           end + ",100,1,InterventionalSuperiority\n";
}

std::vector<const TrialRecord*> phase3_pool(const Registry& reg) {
    std::vector<const TrialRecord*> pool;
    for (const auto& t : reg.trials())
        if (t.phase == Phase::PhaseIII) pool.push_back(&t);
    return pool;
}

LinkResult link_first(const Registry& reg, const DrugCanonicalizer& d = {}, const LinkOptions& o = {}) {
    const auto pool = phase3_pool(reg);
    return link(*reg.find("P2"), pool, d, o);
}

}  // namespace

TEST_SUITE("linker") {
    TEST_CASE("all drugs of one set, conditions subset, earlier start") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "A;B", "Asthma", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "A|B|C", "Asthma;Lung Diseases", "2012-01-01", "2013-01-01"),
            "");
        const auto r = link_first(reg);
        CHECK(r.continued);
        CHECK(r.matched_phase3_ids == std::vector<std::string>{"P3"});
    }

    TEST_CASE("one satisfied set is enough") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "A;Z|B", "Asthma", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "B", "Asthma", "2012-01-01", "2013-01-01"),
            "");
        CHECK(link_first(reg).continued);
    }

    TEST_CASE("a missing drug blocks the match") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "A;B", "Asthma", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "A;C", "Asthma", "2012-01-01", "2013-01-01"),
            "");
        CHECK_FALSE(link_first(reg).continued);
    }

    TEST_CASE("synonyms") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "Acetaminophen", "Pain", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "Paracetamol", "Pain", "2012-01-01", "2013-01-01"),
            "");
        CHECK_FALSE(link_first(reg).continued);
        DrugCanonicalizer d;
        d.add_synonym("paracetamol", "acetaminophen");
        CHECK(link_first(reg, d).continued);
    }

    TEST_CASE("canonical keys are idempotent and symmetric") {
        DrugCanonicalizer d;
        d.add_synonym("Paracetamol", "Acetaminophen");
        d.add_synonym("APAP", "acetaminophen");
        CHECK(d.key("apap") == d.key("PARACETAMOL"));
        CHECK(d.key(d.key("acetaminophen")) == d.key("acetaminophen"));
        CHECK(d.key("Acetaminophen 500 mg tablets") == d.key("paracetamol"));
        CHECK(d.key("  Unrelated   Drug ") == "unrelated drug");
    }

    TEST_CASE("dosage and formulation suffixes") {
        DrugCanonicalizer d;
        CHECK(d.normalize("Drugzol 10 mg") == "drugzol");
        CHECK(d.normalize("Drugzol 0.5mg/kg") == "drugzol");
        CHECK(d.normalize("Drugzol 2.5%") == "drugzol");
        CHECK(d.normalize("Drugzol Injection") == "drugzol");
        CHECK(d.normalize("Drugzol 20 mg tablets bid") == "drugzol");
        CHECK(d.normalize("Vitamin D3") == "vitamin d3");
        CHECK(d.normalize("Mg") == "mg");
    }

    TEST_CASE("condition subset with the stoplist") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "A", "Asthma;Disease", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "A", "Asthma", "2012-01-01", "2013-01-01"),
            "");
        CHECK(link_first(reg).continued);
        LinkOptions strict;
        strict.mesh_stoplist.clear();
        CHECK_FALSE(link_first(reg, {}, strict).continued);

        const auto wider = fixtures::load(
            row("P2", "PhaseII", "A", "Asthma;Rhinitis", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "A", "Asthma", "2012-01-01", "2013-01-01"),
            "");
        CHECK_FALSE(link_first(wider).continued);
    }

    TEST_CASE("start dates must be strictly ordered") {
        const auto same = fixtures::load(
            row("P2", "PhaseII", "A", "Asthma", "2012-01-01", "2013-01-01") +
                row("P3", "PhaseIII", "A", "Asthma", "2012-01-01", "2014-01-01"),
            "");
        CHECK_FALSE(link_first(same).continued);
        const auto later = fixtures::load(
            row("P2", "PhaseII", "A", "Asthma", "2012-01-02", "2013-01-01") +
                row("P3", "PhaseIII", "A", "Asthma", "2012-01-01", "2014-01-01"),
            "");
        CHECK_FALSE(link_first(later).continued);
    }

    TEST_CASE("phase III results are not required") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "A", "Asthma", "2010-01-01", "2011-01-01") +
                row("P3", "PhaseIII", "A", "Asthma", "2012-01-01", "2013-01-01"),
            "P2,primary,exact,0.2,0\n");
        CHECK(link_first(reg).continued);
    }

    TEST_CASE("skip reasons") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "", "Asthma", "2010-01-01", "2011-01-01") +
                row("P2b", "PhaseII", "A", "Asthma", "2018-06-01", "2019-01-01") +
                row("P2c", "PhaseII", "A", "Asthma", "2010-01-01", "2018-12-31") +
                row("P3", "PhaseIII", "A", "Asthma", "2019-06-01", "2020-01-01"),
            "");
        const auto all = link_all(reg, {});
        CHECK(all.find("P2")->skip == SkipReason::NoCuratedIntervention);
        CHECK(all.find("P2b")->skip == SkipReason::CompletedAfterCutoff);
        CHECK(all.find("P2c")->skip == SkipReason::None);
        CHECK(all.find("P2c")->continued);
        CHECK(all.find("P3") == nullptr);
        CHECK(to_string(SkipReason::CompletedAfterCutoff) != to_string(SkipReason::None));
    }

    TEST_CASE("empty phase III pool") {
        const auto reg = fixtures::load(row("P2", "PhaseII", "A", "Asthma", "2010-01-01", "2011-01-01") +
                                            row("Q2", "PhaseII", "B", "Asthma", "2010-01-01", "2011-01-01"),
                                        "");
        const auto all = link_all(reg, {});
        for (const auto& r : all.results) CHECK_FALSE(r.continued);
    }

    TEST_CASE("summary by sponsor class") {
        const auto reg = fixtures::load(
            row("P2", "PhaseII", "A", "Asthma", "2010-01-01", "2011-01-01") +
                row("Q2", "PhaseII", "B", "Asthma", "2010-01-01", "2011-01-01") +
                row("U2", "PhaseII", "A", "Asthma", "2010-01-01", "2011-01-01", "Some University",
                    "NonIndustry") +
                row("P3", "PhaseIII", "A", "Asthma", "2012-01-01", "2013-01-01"),
            "");
        const auto all = link_all(reg, {});
        REQUIRE(all.summary.size() == 2);
        for (const auto& s : all.summary) {
            if (s.sponsor_class == SponsorClass::Industry) {
                CHECK(s.eligible == 2);
                CHECK(s.continued == 1);
                CHECK(s.rate() == 0.5);
            } else {
                CHECK(s.eligible == 1);
                CHECK(s.continued == 1);
            }
        }
        std::ostringstream links, summary;
        write_links_csv(links, all);
        write_links_summary_csv(summary, all);
        CHECK(links.str() == "phase2_id,phase3_id\nP2,P3\nU2,P3\n");
        CHECK(summary.str().rfind("phase2_id,continued,n_matches,skip_reason\n", 0) == 0);
    }

    TEST_CASE("larger pools never undo a match and order does not matter") {
        std::mt19937_64 rng(5);
        std::string body;
        const char* drugs[] = {"A", "B", "C", "D"};
        const char* mesh[] = {"Asthma", "Asthma;Rhinitis", "Rhinitis", "Asthma;Lung Diseases"};
        for (int i = 0; i < 30; ++i) {
            body += row("T2-" + std::to_string(i), "PhaseII", drugs[rng() % 4], mesh[rng() % 3],
                        "2010-0" + std::to_string(1 + rng() % 9) + "-01", "2011-01-01");
            body += row("T3-" + std::to_string(i), "PhaseIII",
                        std::string(drugs[rng() % 4]) + "|" + drugs[rng() % 4], mesh[rng() % 4],
                        "2010-0" + std::to_string(1 + rng() % 9) + "-15", "2013-01-01");
        }
        const auto reg = fixtures::load(body, "");
        auto pool = phase3_pool(reg);
        DrugCanonicalizer d;
        for (const auto& t : reg.trials()) {
            if (t.phase != Phase::PhaseII) continue;
            const auto full = link(t, pool, d);
            std::vector<const TrialRecord*> half(pool.begin(), pool.begin() + 15);
            const auto part = link(t, half, d);
            if (part.continued) CHECK(full.continued);
            auto shuffled = pool;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            CHECK(link(t, shuffled, d).matched_phase3_ids == full.matched_phase3_ids);
        }
        const auto one = link_all(reg, d, {}, 1);
        const auto many = link_all(reg, d, {}, 4);
        REQUIRE(one.results.size() == many.results.size());
        for (std::size_t i = 0; i < one.results.size(); ++i)
            CHECK(one.results[i].matched_phase3_ids == many.results[i].matched_phase3_ids);
    }
}
