#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "shapdoor/attack.hpp"
#include "testing.hpp"

namespace sd = shapdoor;
using sd::testing::make_dataset;
using sd::testing::to_matrix;

namespace {

sd::ShapMatrix shap_of(std::vector<std::vector<double>> rows) {
  sd::ShapMatrix s;
  s.values = to_matrix(rows);
  s.sample_ids.resize(rows.size());
  std::iota(s.sample_ids.begin(), s.sample_ids.end(), sd::RowId{0});
  return s;
}

// One feature: benign value 5 on `c5` rows, value 7 on `c7` rows, with the
// given per-row SHAP values.
struct OneFeature {
  sd::Dataset ds;
  sd::ShapMatrix shap;
};

OneFeature one_feature(std::size_t c5, double s5, std::size_t c7, double s7) {
  std::vector<std::vector<double>> rows, sv;
  for (std::size_t i = 0; i < c5; ++i) {
    rows.push_back({5.0});
    sv.push_back({s5});
  }
  for (std::size_t i = 0; i < c7; ++i) {
    rows.push_back({7.0});
    sv.push_back({s7});
  }
  return {make_dataset(rows, std::vector<int>(rows.size(), sd::kBenign)), shap_of(sv)};
}

sd::ConstraintProfile with_constraint(std::size_t n, std::size_t f, sd::Constraint c) {
  auto p = sd::ConstraintProfile::from_specs(sd::default_specs(n));
  p.features[f].constraint = c;
  return p;
}

sd::Trigger trigger_of(std::vector<sd::TriggerEntry> e) {
  sd::Trigger t;
  t.entries = std::move(e);
  return t;
}

}  // namespace

// --- feature selection --------------------------------------------------------

TEST(FeatureImportance, WorkedExample) {
  const auto s = shap_of({{0.5, -0.2}, {-0.3, 0.1}});
  const auto signed_sum = sd::feature_importance(s, sd::ImportanceMode::signed_sum);
  const auto absolute = sd::feature_importance(s, sd::ImportanceMode::absolute);
  EXPECT_NEAR(signed_sum[0], 0.2, 1e-15);
  EXPECT_NEAR(signed_sum[1], -0.1, 1e-15);
  EXPECT_NEAR(absolute[0], 0.8, 1e-15);
  EXPECT_NEAR(absolute[1], 0.3, 1e-15);
}

TEST(SelectFeatures, WorkedExamples) {
  const std::vector<double> imp{0.2, -0.1, -0.5};
  EXPECT_EQ(sd::select_features(imp, 2, sd::FeatureOrder::most_goodware_oriented),
            (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(sd::select_features(imp, 1, sd::FeatureOrder::largest_magnitude),
            (std::vector<std::size_t>{2}));
}

TEST(SelectFeatures, TiesGoToLowerIndexAndCandidatesRestrict) {
  const std::vector<double> imp{-1.0, 3.0, -1.0, -3.0};
  EXPECT_EQ(sd::select_features(imp, 3, sd::FeatureOrder::largest_magnitude),
            (std::vector<std::size_t>{1, 3, 0}));
  const std::vector<std::size_t> cand{0, 1, 2};
  EXPECT_EQ(sd::select_features(imp, 2, sd::FeatureOrder::most_goodware_oriented, cand),
            (std::vector<std::size_t>{0, 2}));
}

TEST(SelectFeatures, PropertyMatchesSortAndIsScaleInvariant) {
  sd::Rng rng(31);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(15);
    std::vector<double> imp(n);
    // few distinct values so ties are common
    for (double& v : imp) v = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
    const std::size_t k = 1 + rng.below(n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto by_signed = idx;
    std::stable_sort(by_signed.begin(), by_signed.end(),
                     [&](auto a, auto b) { return imp[a] < imp[b]; });
    auto by_mag = idx;
    std::stable_sort(by_mag.begin(), by_mag.end(),
                     [&](auto a, auto b) { return std::abs(imp[a]) > std::abs(imp[b]); });
    by_signed.resize(k);
    by_mag.resize(k);
    const auto g = sd::select_features(imp, k, sd::FeatureOrder::most_goodware_oriented);
    const auto m = sd::select_features(imp, k, sd::FeatureOrder::largest_magnitude);
    ASSERT_EQ(g, by_signed);
    ASSERT_EQ(m, by_mag);
    auto scaled = imp;
    for (double& v : scaled) v *= 2.5;
    ASSERT_EQ(sd::select_features(scaled, k, sd::FeatureOrder::most_goodware_oriented), g);
    ASSERT_EQ(sd::select_features(scaled, k, sd::FeatureOrder::largest_magnitude), m);
  }
}

// --- value selection ----------------------------------------------------------

TEST(MinPopulation, WorkedExamples) {
  sd::BenignValueTable t{{{1.0, 2}, {2.0, 1}, {3.0, 3}}, {{5.0, 1}, {7.0, 1}}};
  EXPECT_EQ(sd::select_value_min_population(0, t), 2.0);
  EXPECT_EQ(sd::select_value_min_population(1, t), 5.0);
}

TEST(CountShap, SignedPrefersTheDenseNegativeValue) {
  // v5: 1/10 - 4 = -3.9, v7: 1/2 - 1 = -0.5
  const auto h = one_feature(10, -0.4, 2, -0.5);
  const auto table = sd::benign_value_table(h.ds);
  EXPECT_EQ(sd::select_value_count_shap(0, table, h.shap, h.ds, 1.0, 1.0,
                                        sd::ImportanceMode::signed_sum),
            5.0);
}

TEST(CountShap, AbsolutePrefersTheSmallMagnitude) {
  // v5: 1/10 + 4.0 = 4.1, v7: 1/2 + 0.2 = 0.7
  const auto h = one_feature(10, 0.4, 2, 0.1);
  const auto table = sd::benign_value_table(h.ds);
  EXPECT_EQ(sd::select_value_count_shap(0, table, h.shap, h.ds, 1.0, 1.0,
                                        sd::ImportanceMode::absolute),
            7.0);
}

TEST(CountShap, ZeroBetaPicksMostFrequentValue) {
  const auto h = one_feature(3, 5.0, 9, 5.0);
  const auto table = sd::benign_value_table(h.ds);
  for (auto mode : {sd::ImportanceMode::signed_sum, sd::ImportanceMode::absolute}) {
    EXPECT_EQ(sd::select_value_count_shap(0, table, h.shap, h.ds, 1.0, 0.0, mode), 7.0);
  }
}

// Brute force over every candidate value, computed straight from the rows.
TEST(CountShap, PropertyMatchesBruteForce) {
  sd::Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<std::vector<double>> rows(n, std::vector<double>(2)), sv(n, std::vector<double>(2));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        rows[i][j] = static_cast<double>(rng.below(5));
        sv[i][j] = rng.uniform(-1.0, 1.0);
      }
      labels[i] = rng.uniform() < 0.3 ? sd::kMalware : sd::kBenign;
    }
    labels[0] = sd::kBenign;
    const auto ds = make_dataset(rows, labels);
    const auto shap = shap_of(sv);
    const auto table = sd::benign_value_table(ds);
    const double alpha = rng.uniform(0.0, 2.0), beta = rng.uniform(0.0, 2.0);
    for (auto mode : {sd::ImportanceMode::signed_sum, sd::ImportanceMode::absolute}) {
      for (std::size_t f = 0; f < 2; ++f) {
        double best = 0.0, best_score = std::numeric_limits<double>::infinity();
        for (double v = 0.0; v < 5.0; v += 1.0) {
          std::size_t c = 0;
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            if (rows[i][f] != v) continue;
            c += labels[i] == sd::kBenign;
            s += mode == sd::ImportanceMode::absolute ? std::abs(sv[i][f]) : sv[i][f];
          }
          if (c == 0) continue;
          const double score = alpha / static_cast<double>(c) + beta * s;
          if (score < best_score) {
            best_score = score;
            best = v;
          }
        }
        ASSERT_EQ(sd::select_value_count_shap(f, table, shap, ds, alpha, beta, mode), best)
            << "trial " << t << " feature " << f;
      }
    }
  }
}

TEST(CountShap, InflationSteersAwayFromPenalisedValues) {
  const auto h = one_feature(10, -0.4, 2, -0.5);
  const auto table = sd::benign_value_table(h.ds);
  const sd::Inflation avoid5 = [](std::size_t, double v) { return v == 5.0 ? 100.0 : 0.0; };
  EXPECT_EQ(sd::select_value_count_shap(0, table, h.shap, h.ds, 1.0, 1.0,
                                        sd::ImportanceMode::signed_sum, avoid5),
            7.0);
}

TEST(CountShap, MisalignedShapIsDimensionError) {
  const auto h = one_feature(2, 0.0, 2, 0.0);
  const auto table = sd::benign_value_table(h.ds);
  const auto bad = shap_of({{0.0}});
  EXPECT_THROW(sd::select_value_count_shap(0, table, bad, h.ds, 1, 1, sd::ImportanceMode::absolute),
               sd::DimensionError);
}

// --- strategies ---------------------------------------------------------------

// Step 1: signed sums over r0..r2 are (-0.7, -0.3, -0.3) -> feature 0.
//   value 1: 1/2 - 0.9 = -0.4; value 2: 1/1 + 0.2 = 1.2 -> 1, rows {r0, r1}.
// Step 2: sums over {r0, r1} are f1 = 0.1, f2 = -0.2 -> feature 2.
//   value 0: 1 + 0.1 = 1.1; value 1: 1 - 0.3 = 0.7 -> 1, rows {r1}.
// Step 3: only feature 1 is left; r1 carries 6.
TEST(Combined, HandTrace) {
  const auto h = sd::testing::hand_instance();
  sd::SelectorConfig cfg;
  cfg.trigger_size = 3;
  std::vector<sd::CombinedStep> trace;
  const auto t = sd::build_trigger_combined(h.shap, h.ds, cfg,
                                            sd::ConstraintProfile::from_specs(h.ds.specs()),
                                            nullptr, &trace);
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace[0].feature, 0u);
  EXPECT_EQ(trace[0].value, 1.0);
  EXPECT_EQ(trace[0].support, 2u);
  EXPECT_EQ(trace[1].feature, 2u);
  EXPECT_EQ(trace[1].value, 1.0);
  EXPECT_EQ(trace[1].support, 1u);
  EXPECT_EQ(trace[2].feature, 1u);
  EXPECT_EQ(trace[2].value, 6.0);
  EXPECT_EQ(trace[2].support, 1u);
  EXPECT_EQ(t.entries, (std::vector<sd::TriggerEntry>{{0, 1.0}, {2, 1.0}, {1, 6.0}}));
  EXPECT_FALSE(t.early_stop);
  EXPECT_EQ(t.strategy, sd::Strategy::combined);
}

TEST(Combined, RunsOutOfFeaturesEarly) {
  const auto h = sd::testing::hand_instance();
  sd::SelectorConfig cfg;
  cfg.trigger_size = 5;
  auto profile = sd::ConstraintProfile::from_specs(h.ds.specs());
  profile.features[1].modifiable = false;
  const auto t = sd::build_trigger_combined(h.shap, h.ds, cfg, profile);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_TRUE(t.early_stop);
  for (const auto& e : t.entries) EXPECT_NE(e.feature, 1u);
}

// Each feature's rarest value lives in a different benign row, so the
// independent trigger matches no benign row while the combined one always
// keeps at least one.
TEST(Strategies, IndependentCanHaveEmptySupport) {
  const auto ds = make_dataset({{1, 1}, {0, 0}, {0, 1}, {0, 1}, {1, 1}, {1, 1}}, {0, 0, 0, 0, 1, 1});
  const auto shap = shap_of(std::vector<std::vector<double>>(6, {-0.1, -0.2}));
  const auto profile = sd::ConstraintProfile::from_specs(ds.specs());
  sd::SelectorConfig cfg;
  cfg.trigger_size = 2;
  cfg.value_selector = sd::ValueSelector::min_population;
  const auto ind = sd::build_trigger_independent(shap, ds, cfg, profile);
  const auto support = [&](const sd::Trigger& t) {
    std::size_t n = 0;
    for (std::size_t r : ds.rows_with_label(sd::kBenign)) {
      n += std::all_of(t.entries.begin(), t.entries.end(),
                       [&](const auto& e) { return ds.row(r)[e.feature] == e.value; });
    }
    return n;
  };
  ASSERT_EQ(ind.size(), 2u);
  EXPECT_EQ(support(ind), 0u);
  std::vector<sd::CombinedStep> trace;
  const auto comb = sd::build_trigger_combined(shap, ds, cfg, profile, nullptr, &trace);
  EXPECT_GE(support(comb), 1u);
  for (const auto& s : trace) EXPECT_GE(s.support, 1u);
}

TEST(Combined, PropertySupportNeverEmptyAndShrinks) {
  sd::Rng rng(51);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 10 + rng.below(40), d = 2 + rng.below(6);
    const auto ds = sd::testing::random_dataset(rng, n, d, 4);
    sd::ShapMatrix shap;
    shap.values = sd::Matrix(n, d);
    for (double& v : shap.values.data()) v = rng.uniform(-1.0, 1.0);
    shap.sample_ids = ds.ids();
    sd::SelectorConfig cfg;
    cfg.trigger_size = 1 + rng.below(d);
    std::vector<sd::CombinedStep> trace;
    const auto trig = sd::build_trigger_combined(
        shap, ds, cfg, sd::ConstraintProfile::from_specs(ds.specs()), nullptr, &trace);
    ASSERT_EQ(trig.size(), trace.size());
    ASSERT_NO_THROW(trig.validate(d));
    std::size_t prev = ds.count_label(sd::kBenign);
    for (std::size_t k = 0; k < trace.size(); ++k) {
      ASSERT_GE(trace[k].support, 1u);
      ASSERT_LE(trace[k].support, prev);
      prev = trace[k].support;
      // recount the rows matching the first k+1 pairs
      std::size_t match = 0;
      for (std::size_t r : ds.rows_with_label(sd::kBenign)) {
        bool all = true;
        for (std::size_t q = 0; q <= k; ++q) all = all && ds.row(r)[trace[q].feature] == trace[q].value;
        match += all;
      }
      ASSERT_EQ(match, trace[k].support);
    }
  }
}

TEST(Independent, UsesOnlyModifiableFeatures) {
  sd::Rng rng(61);
  const auto ds = sd::testing::random_dataset(rng, 60, 6);
  sd::ShapMatrix shap;
  shap.values = sd::Matrix(60, 6);
  for (std::size_t i = 0; i < 60; ++i) shap.values(i, 0) = -5.0;  // most important, but fixed
  for (double& v : shap.values.data()) v += rng.uniform(-0.1, 0.1);
  shap.sample_ids = ds.ids();
  auto profile = sd::ConstraintProfile::from_specs(ds.specs());
  profile.features[0] = {false, sd::Constraint::fixed, sd::ValueDomain::observed_benign_only};
  for (auto fs : {sd::FeatureSelector::large_shap, sd::FeatureSelector::large_abs_shap}) {
    sd::SelectorConfig cfg;
    cfg.feature_selector = fs;
    cfg.trigger_size = 5;
    const auto t = sd::build_trigger_independent(shap, ds, cfg, profile);
    ASSERT_EQ(t.size(), 5u);
    for (const auto& e : t.entries) EXPECT_NE(e.feature, 0u);
    EXPECT_NO_THROW(sd::check_trigger_feasible(t, profile, sd::benign_value_table(ds), ds.specs()));
  }
  sd::SelectorConfig too_big;
  too_big.trigger_size = 6;
  EXPECT_THROW(sd::build_trigger_independent(shap, ds, too_big, profile), sd::InsufficientDataError);
}

TEST(Feasibility, RejectsFixedFeaturesAndUnseenValues) {
  const auto ds = make_dataset({{1, 2}, {3, 4}}, {0, 1});
  const auto table = sd::benign_value_table(ds);
  auto profile = sd::ConstraintProfile::from_specs(ds.specs());
  EXPECT_NO_THROW(sd::check_trigger_feasible(trigger_of({{0, 1.0}}), profile, table, ds.specs()));
  EXPECT_THROW(sd::check_trigger_feasible(trigger_of({{0, 3.0}}), profile, table, ds.specs()),
               sd::ConfigError);
  profile.features[1].modifiable = false;
  EXPECT_THROW(sd::check_trigger_feasible(trigger_of({{1, 2.0}}), profile, table, ds.specs()),
               sd::ConfigError);
}

TEST(AdditiveInflation, PenalisesValuesMostMalwareExceeds) {
  const auto ds = make_dataset({{0}, {5}, {6}, {7}, {8}}, {0, 1, 1, 1, 1});
  const auto profile = with_constraint(1, 0, sd::Constraint::additive_only);
  const auto infl = sd::additive_inflation(ds, profile, shap_of({{0.5}, {0}, {0}, {0}, {-1}}));
  EXPECT_EQ(infl(0, 8.0), 0.0);
  EXPECT_EQ(infl(0, 6.0), 0.0);   // half the malware can take it
  EXPECT_EQ(infl(0, 5.0), 10.0);  // 10 * max |S|
  const auto free = sd::additive_inflation(ds, sd::ConstraintProfile::from_specs(ds.specs()),
                                           shap_of({{0.5}, {0}, {0}, {0}, {-1}}));
  EXPECT_EQ(free(0, 0.0), 0.0);
}

// --- watermarking -------------------------------------------------------------

TEST(ApplyTrigger, AdditiveFeatureCannotDecrease) {
  const auto profile = with_constraint(2, 0, sd::Constraint::additive_only);
  const std::vector<double> x{10.0, 1.0};
  const auto w = sd::apply_trigger(x, trigger_of({{0, 5.0}, {1, 3.0}}), profile);
  EXPECT_FALSE(w.applied);
  EXPECT_EQ(w.x, x);  // all or nothing
  const auto up = sd::apply_trigger(x, trigger_of({{0, 12.0}, {1, 3.0}}), profile);
  EXPECT_TRUE(up.applied);
  EXPECT_EQ(up.x, (std::vector<double>{12.0, 3.0}));
}

TEST(ApplyTrigger, PropertyIdempotentAndAdditiveNeverDecreases) {
  sd::Rng rng(71);
  for (int t = 0; t < 300; ++t) {
    const std::size_t d = 1 + rng.below(6);
    auto profile = sd::ConstraintProfile::from_specs(sd::default_specs(d));
    for (auto& f : profile.features) {
      if (rng.uniform() < 0.4) f.constraint = sd::Constraint::additive_only;
    }
    std::vector<double> x(d);
    for (double& v : x) v = static_cast<double>(rng.below(10));
    sd::Trigger trig;
    for (std::size_t f : rng.sample_without_replacement(d, 1 + rng.below(d))) {
      trig.entries.push_back({f, static_cast<double>(rng.below(10))});
    }
    const auto once = sd::apply_trigger(x, trig, profile);
    const auto twice = sd::apply_trigger(once.x, trig, profile);
    ASSERT_EQ(once.x, twice.x);
    if (once.applied) {
      ASSERT_TRUE(twice.applied);
      for (std::size_t j = 0; j < d; ++j) {
        if (profile[j].constraint == sd::Constraint::additive_only) ASSERT_GE(once.x[j], x[j]);
      }
      for (const auto& e : trig.entries) ASSERT_EQ(once.x[e.feature], e.value);
    } else {
      ASSERT_EQ(once.x, x);
    }
  }
}

TEST(ApplyTrigger, FixedFeatureIsConfigError) {
  auto profile = with_constraint(2, 1, sd::Constraint::fixed);
  profile.features[1].modifiable = false;
  EXPECT_THROW(sd::apply_trigger(std::vector<double>{0, 0}, trigger_of({{1, 1.0}}), profile),
               sd::ConfigError);
}

// --- poisoning ----------------------------------------------------------------

TEST(Poison, OnePercentOfEightThousand) {
  sd::SynthConfig sc;
  sc.n_samples = 8000;
  sc.n_features = 10;
  sc.n_informative = 5;
  const auto train = sd::generate_synthetic(sc);
  const auto profile = sd::ConstraintProfile::from_specs(train.specs());
  const auto trig = trigger_of({{1, 3.0}, {4, 2.0}});
  const auto r = sd::build_poison_set(train, trig, profile, 0.01, 9);
  ASSERT_EQ(r.plan.selected_benign_ids.size(), 80u);
  EXPECT_EQ(r.poisoned.labels(), train.labels());
  EXPECT_EQ(r.poisoned.ids(), train.ids());
  const std::set<sd::RowId> chosen(r.plan.selected_benign_ids.begin(),
                                   r.plan.selected_benign_ids.end());
  std::size_t changed_or_chosen = 0;
  for (std::size_t i = 0; i < train.n_rows(); ++i) {
    if (chosen.contains(train.id(i))) {
      ++changed_or_chosen;
      EXPECT_EQ(train.label(i), sd::kBenign);
      EXPECT_EQ(r.poisoned.row(i)[1], 3.0);
      EXPECT_EQ(r.poisoned.row(i)[4], 2.0);
    } else {
      ASSERT_TRUE(std::equal(train.row(i).begin(), train.row(i).end(), r.poisoned.row(i).begin()));
    }
  }
  EXPECT_EQ(changed_or_chosen, 80u);
  const auto again = sd::build_poison_set(train, trig, profile, 0.01, 9);
  EXPECT_EQ(again.plan.selected_benign_ids, r.plan.selected_benign_ids);
  EXPECT_EQ(again.poisoned, r.poisoned);
}

TEST(Poison, ZeroFractionIsNoOp) {
  sd::Rng rng(3);
  const auto ds = sd::testing::random_dataset(rng, 50, 3);
  const auto r = sd::build_poison_set(ds, trigger_of({{0, 1.0}}),
                                      sd::ConstraintProfile::from_specs(ds.specs()), 0.0, 1);
  EXPECT_EQ(r.poisoned, ds);
  EXPECT_TRUE(r.plan.selected_benign_ids.empty());
}

TEST(Poison, SkipsInfeasibleRowsAndReportsShortage) {
  // additive feature 0: only benign rows with x0 <= 2 can take the trigger
  const auto ds = make_dataset({{1}, {2}, {3}, {4}, {5}, {9}}, {0, 0, 0, 0, 0, 1});
  const auto profile = with_constraint(1, 0, sd::Constraint::additive_only);
  const auto r = sd::build_poison_set(ds, trigger_of({{0, 2.0}}), profile, 0.3, 1);
  EXPECT_EQ(r.infeasible_benign, 3u);
  EXPECT_EQ(r.plan.selected_benign_ids.size(), 2u);
  EXPECT_THROW(sd::build_poison_set(ds, trigger_of({{0, 2.0}}), profile, 0.5, 1),
               sd::InsufficientDataError);
  EXPECT_THROW(sd::build_poison_set(ds, trigger_of({{0, 2.0}}), profile, 1.0, 1), sd::ConfigError);
}

TEST(Watermark, KeepsOnlyDetectedFeasibleMalware) {
  // clean model: malware iff x0 >= 5
  const auto clean = sd::Model::make_linear(sd::ModelKind::logistic_regression, {{1.0, 0.0}, -4.5});
  const auto test = make_dataset({{9, 0}, {6, 4}, {1, 0}, {7, 0}, {0, 0}}, {1, 1, 1, 1, 0});
  auto profile = with_constraint(2, 1, sd::Constraint::additive_only);
  const auto wm = sd::watermark_test_malware(test, clean, trigger_of({{1, 2.0}}), profile);
  EXPECT_EQ(wm.n_malware, 4u);
  EXPECT_EQ(wm.n_missed_by_clean, 1u);
  EXPECT_EQ(wm.n_infeasible, 1u);  // row 1 already has x1 = 4 > 2
  ASSERT_EQ(wm.xb.n_rows(), 2u);
  EXPECT_EQ(wm.xb.ids(), (std::vector<sd::RowId>{0, 3}));
  EXPECT_EQ(wm.original.ids(), wm.xb.ids());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(wm.xb.row(i)[1], 2.0);
    EXPECT_EQ(wm.original.row(i)[1], 0.0);
    EXPECT_EQ(wm.xb.label(i), sd::kMalware);
  }
}

// --- persistence --------------------------------------------------------------

TEST(TriggerJson, RoundTrip) {
  sd::Trigger t = trigger_of({{3, 1.5}, {0, -2.0}});
  t.strategy = sd::Strategy::combined;
  t.feature_selector = "large_shap";
  t.value_selector = "count_shap";
  t.constraint_profile = "ember17";
  t.requested_size = 4;
  t.early_stop = true;
  const auto specs = sd::default_specs(4);
  const auto text = sd::trigger_to_json(t, specs);
  EXPECT_EQ(sd::trigger_from_json(text), t);
  const auto path = std::filesystem::temp_directory_path() / "shapdoor_trigger.json";
  sd::save_trigger(t, specs, path);
  EXPECT_EQ(sd::load_trigger(path), t);
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(sd::trigger_from_json("{\"entries\": 3}"));
}

TEST(TriggerValidate, DuplicatesAndRange) {
  EXPECT_THROW(trigger_of({{0, 1.0}, {0, 2.0}}).validate(3), sd::ConfigError);
  EXPECT_THROW(trigger_of({{5, 1.0}}).validate(3), sd::DimensionError);
}

TEST(SelectorNames, ParseRoundTrip) {
  for (auto s : {sd::ValueSelector::min_population, sd::ValueSelector::count_shap,
                 sd::ValueSelector::count_abs_shap}) {
    EXPECT_EQ(sd::parse_value_selector(sd::to_string(s)), s);
  }
  for (auto s : {sd::FeatureSelector::large_shap, sd::FeatureSelector::large_abs_shap}) {
    EXPECT_EQ(sd::parse_feature_selector(sd::to_string(s)), s);
  }
  EXPECT_EQ(sd::parse_strategy("combined"), sd::Strategy::combined);
  EXPECT_THROW(sd::parse_strategy("greedy"), sd::ConfigError);
}
