#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "trialz/categories.hpp"
#include "trialz/error.hpp"
#include "trialz/registry.hpp"

using namespace trialz;

TEST_SUITE("registry") {
    TEST_CASE("toy fixture loads two trials and three outcomes") {
        const auto d = fixtures::dir() / "toy";
        auto reg = ingest(d / "trials.csv", d / "outcomes.csv", d / "rankings.csv");
        REQUIRE(reg.trials().size() == 2);
        REQUIRE(reg.outcomes().size() == 3);
        const auto* p2 = reg.find("NCT00000001");
        REQUIRE(p2);
        CHECK(p2->phase == Phase::PhaseII);
        CHECK(p2->intervention_sets.size() == 2);
        CHECK(p2->intervention_sets[0] == std::vector<std::string>{"Drugzol 10 mg", "Placebo"});
        CHECK(p2->condition_category == "C14");
        CHECK(p2->industry_rank_keys.at(RankCriterion::Revenue2018) == 3);
        CHECK(reg.outcomes()[1].raw_p == ReportedP::less(0.001));
        CHECK(reg.outcomes()[2].mht_adjusted);
        CHECK(reg.outcomes_of("NCT00000001").size() == 2);
    }

    TEST_CASE("ingest, serialize, ingest is bit-identical") {
        const auto d = fixtures::dir() / "toy";
        auto reg = ingest(d / "trials.csv", d / "outcomes.csv", d / "rankings.csv");
        std::ostringstream t1, o1, r1;
        write_trials_csv(t1, reg);
        write_outcomes_csv(o1, reg);
        write_rankings_csv(r1, reg);
        auto again = ingest_text(t1.str(), o1.str(), r1.str());
        std::ostringstream t2, o2, r2;
        write_trials_csv(t2, again);
        write_outcomes_csv(o2, again);
        write_rankings_csv(r2, again);
        CHECK(t1.str() == t2.str());
        CHECK(o1.str() == o2.str());
        CHECK(r1.str() == r2.str());
        CHECK(t1.str() == fixtures::slurp(d / "trials.csv"));
        CHECK(o1.str() == fixtures::slurp(d / "outcomes.csv"));
    }

    TEST_CASE("dangling outcome is an integrity error listing the id") {
        try {
            fixtures::load("", "NCT9,primary,exact,0.2,0\n");
            FAIL("expected IntegrityError");
        } catch (const IntegrityError& e) {
            CHECK(std::string(e.what()).find("NCT9") != std::string::npos);
        }
    }

    TEST_CASE("schema errors name file, line and column") {
        try {
            fixtures::load("T1,PhaseII,A,Industry,x,y,2010-01-01,2011-01-01,many,0,InterventionalSuperiority\n", "");
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            const std::string msg = e.what();
            CHECK(msg.find(":2:") != std::string::npos);
            CHECK(msg.find("enrollment") != std::string::npos);
        }
        CHECK_THROWS_AS(fixtures::load("T1,PhaseII,A,Industry,x,y,2010-01-01,2011-01-01,5,0,Interventional\n", ""),
                        SchemaError);
        CHECK_THROWS_AS(fixtures::load("T1,PhaseII,A,Industry,x,y,2010-01-01,2011-01-01,5,0,Other\n",
                                       "T1,primary,exact,1.5,0\n"),
                        SchemaError);
    }

    TEST_CASE("multiple lead sponsors are rejected") {
        CHECK_THROWS_AS(fixtures::load("T1,PhaseII,A;B,Industry,x,y,,,5,0,Other\n", ""), IntegrityError);
    }

    TEST_CASE("reported p-value invariants") {
        CHECK_THROWS_AS(ReportedP::exact(-0.1), DomainError);
        CHECK_THROWS_AS(ReportedP::exact(1.01), DomainError);
        CHECK_THROWS_AS(ReportedP::less(0.0), DomainError);
        CHECK(ReportedP::exact(0.0).value == 0.0);
    }

    TEST_CASE("sample filters") {
        auto reg = fixtures::load(
            "C1,PhaseII,Colgate-Palmolive,Industry,x,y,,,5,0,InterventionalSuperiority\n"
            "NCT02799472,PhaseIII,B,Industry,x,y,,,5,0,InterventionalSuperiority\n"
            "O1,PhaseII,B,Industry,x,y,,,5,0,Other\n"
            "P1,Other,B,Industry,x,y,,,5,0,InterventionalSuperiority\n"
            "K1,PhaseII,B,NonIndustry,x,y,,,5,0,InterventionalSuperiority\n",
            "C1,primary,exact,0.05,0\nC1,primary,exact,0.05,0\nC1,primary,exact,0.2,0\n"
            "NCT02799472,primary,exact,0.5,0\nK1,primary,exact,0.5,0\n");
        auto f = apply_sample_filters(reg);
        REQUIRE(f.registry.trials().size() == 1);
        CHECK(f.registry.trials()[0].trial_id == "K1");
        CHECK(f.registry.outcomes().size() == 1);
        REQUIRE(f.audit.size() == 4);
        CHECK(f.audit[0].trials_removed == 1);
        CHECK(f.audit[0].outcomes_removed == 3);
        CHECK(f.audit[0].note.find("2 of 3") != std::string::npos);
        CHECK(f.audit[0].note.find("137 of 150") != std::string::npos);
        CHECK(f.audit[1].note.find("211") != std::string::npos);
        CHECK(f.audit[2].trials_removed == 1);
        CHECK(f.audit[3].trials_removed == 1);

        auto clean = fixtures::load("K1,PhaseII,B,NonIndustry,x,y,,,5,0,InterventionalSuperiority\n",
                                    "K1,primary,exact,0.5,0\n");
        auto g = apply_sample_filters(clean);
        CHECK(g.registry.trials().size() == 1);
        CHECK(apply_sample_filters(Registry{}).registry.trials().empty());
    }

    TEST_CASE("sponsor splits") {
        auto reg = fixtures::load("T1,PhaseII,Big Co,Industry,x,y,,,5,0,InterventionalSuperiority\n"
                                  "T2,PhaseII,Tiny Co,Industry,x,y,,,5,0,InterventionalSuperiority\n"
                                  "T3,PhaseII,Univ,NonIndustry,x,y,,,5,0,InterventionalSuperiority\n",
                                  "", "Big Co,revenue2018,10\nTiny Co,revenue2018,11\n");
        SponsorSplit top10{RankCriterion::Revenue2018, 10};
        CHECK(top10.is_large(*reg.find("T1")));
        CHECK_FALSE(top10.is_large(*reg.find("T2")));
        CHECK(in_group(*reg.find("T2"), SponsorGroup::Small, top10));
        CHECK_FALSE(in_group(*reg.find("T3"), SponsorGroup::Small, top10));
        CHECK(all_sponsor_splits().size() == 56);
        // Industry sponsors without ranks warn and count as small.
        auto w = fixtures::load("T1,PhaseII,Nobody,Industry,x,y,,,5,0,InterventionalSuperiority\n", "");
        CHECK(w.warnings().size() == 1);
    }

    TEST_CASE("sponsor normalisation and parent mapping") {
        CHECK(normalize_name("  Johnson   &  JOHNSON ") == "johnson & johnson");
        const auto parents = fixtures::temp_dir("parents") / "parents.csv";
        {
            std::ofstream f(parents);
            f << "sponsor_name,parent\nJanssen Research & Development,Johnson & Johnson\n";
        }
        IngestOptions opts;
        opts.sponsor_parents_csv = parents;
        auto reg = ingest_text(std::string(fixtures::kTrialsHeader) +
                                   "T1,PhaseII,janssen research &  development,Industry,x,y,,,5,0,Other\n",
                               fixtures::kOutcomesHeader,
                               std::string(fixtures::kRankingsHeader) + "Johnson & Johnson,revenue2018,2\n", opts);
        CHECK(reg.trials()[0].sponsor_key == "johnson & johnson");
        CHECK(reg.trials()[0].industry_rank_keys.at(RankCriterion::Revenue2018) == 2);
    }
}

TEST_SUITE("registry") {
    TEST_CASE("condition categories") {
        const auto cats = CategoryTable::builtin();
        CHECK(cats.categories().size() == 15);
        CHECK(cats.assign({"Cardiovascular Diseases"}) == "C14");
        CHECK(cats.assign({"C14.280.647"}) == "C14");
        CHECK(cats.assign({"C14.280", "C17.800"}) == "C14");
        CHECK(cats.assign({"C17.800", "C14.280"}) == "C14");
        CHECK(cats.assign({"Skin and Connective Tissue Diseases"}) == "C17");
        CHECK(cats.assign({}) == "Other");
        CHECK(cats.assign({"Something unknown"}) == "Other");
        CHECK(cats.assign({"Respiratory Tract Diseases"}) == "C08/C09");
        auto with_tree = cats;
        with_tree.add_mesh_tree("Hypertension", "C14.907.489");
        CHECK(with_tree.assign({"hypertension"}) == "C14");
        CHECK(with_tree.assign({"Hypertension", "Mental Disorders"}) == "C14");
    }
}
