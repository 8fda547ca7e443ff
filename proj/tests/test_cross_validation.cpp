#include <gtest/gtest.h>

#include <set>

#include "stress/cross_validation.hpp"
#include "stress/synth.hpp"

using namespace stress;

namespace {

WindowedDataset dummy_dataset(int subjects, int per_subject) {
    WindowedDataset ds;
    ds.class_scheme = ClassScheme::Three;
    ds.channels = 1;
    ds.window_len = 4;
    for (int s = 0; s < subjects; ++s)
        for (int i = 0; i < per_subject; ++i) {
            Window w;
            w.subject_id = synth_subject_id(s);
            w.sample_id = w.subject_id + ":0:" + std::to_string(i);
            w.channels = 1;
            w.length = 4;
            w.data.assign(4, static_cast<double>(i));
            w.label = AffectClass::Baseline;
            ds.windows.push_back(w);
        }
    return ds;
}

WindowedDataset synth_dataset(int subjects, std::uint64_t seed, double seconds) {
    SynthOptions opt;
    opt.modalities = {SensorModality(Location::Chest, SensorKind::RESP)};
    opt.seconds_per_condition = seconds;
    std::vector<WindowedDataset> parts;
    for (const auto& r : synth_generate(subjects, ClassScheme::Three, seed, opt))
        parts.push_back(segment_windows(r, 32, 16, ClassScheme::Three));
    return merge(parts);
}

void expect_partition(const std::vector<Fold>& folds, std::size_t n) {
    std::vector<int> seen(n, 0);
    for (const auto& f : folds) {
        EXPECT_EQ(f.train.size() + f.test.size(), n);
        for (auto i : f.test) ++seen[i];
        std::set<std::size_t> tr(f.train.begin(), f.train.end());
        for (auto i : f.test) EXPECT_FALSE(tr.count(i));
    }
    for (int c : seen) EXPECT_EQ(c, 1);
}

}  // namespace

TEST(Split, KFoldTenByTen) {
    auto ds = dummy_dataset(5, 20);
    auto folds = split(ds, FoldSpec::kfold(10, 3));
    ASSERT_EQ(folds.size(), 10u);
    for (const auto& f : folds) EXPECT_EQ(f.test.size(), 10u);
    expect_partition(folds, 100);
}

TEST(Split, KFoldUnevenSizesAndDeterminism) {
    auto ds = dummy_dataset(1, 23);
    auto a = assign_folds(ds, FoldSpec::kfold(5, 9));
    auto b = assign_folds(ds, FoldSpec::kfold(5, 9));
    EXPECT_EQ(a.fold_of, b.fold_of);
    std::vector<std::size_t> sizes;
    for (const auto& f : a.folds) sizes.push_back(f.test.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{5, 5, 5, 4, 4}));
    expect_partition(a.folds, 23);
    EXPECT_NE(assign_folds(ds, FoldSpec::kfold(5, 10)).fold_of, a.fold_of);
}

TEST(Split, LosoOneFoldPerSubjectAndDisjoint) {
    auto ds = dummy_dataset(17, 6);
    auto folds = split(ds, FoldSpec::loso());
    ASSERT_EQ(folds.size(), 17u);
    expect_partition(folds, ds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::set<std::string> train_subjects, test_subjects;
        for (auto i : folds[f].train) train_subjects.insert(ds.windows[i].subject_id);
        for (auto i : folds[f].test) test_subjects.insert(ds.windows[i].subject_id);
        EXPECT_EQ(test_subjects.size(), 1u);
        EXPECT_EQ(train_subjects.size(), 16u);
        for (const auto& s : test_subjects) EXPECT_FALSE(train_subjects.count(s));
    }
}

TEST(Split, Errors) {
    auto ds = dummy_dataset(1, 5);
    try {
        split(ds, FoldSpec::kfold(6, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "TooFewSamples");
    }
    try {
        split(ds, FoldSpec::loso());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "TooFewSubjects");
    }
    EXPECT_EQ(FoldSpec::parse("kfold:7", 1).k, 7);
    EXPECT_EQ(FoldSpec::parse("loso", 1).scheme, FoldSpec::Scheme::LeaveOneSubjectOut);
    EXPECT_THROW(FoldSpec::parse("kfold:x", 1), Error);
}

TEST(Summary, SampleStandardDeviation) {
    auto a = mean_std({0.8, 1.0});
    EXPECT_DOUBLE_EQ(a.mean, 0.9);
    EXPECT_NEAR(a.sd, 0.1414213562, 1e-9);
    auto b = mean_std({1.0, 1.0, 1.0});
    EXPECT_EQ(b.mean, 1.0);
    EXPECT_EQ(b.sd, 0.0);
    EXPECT_EQ(mean_std({0.5}).sd, 0.0);
}

TEST(Summary, RecomputableFromFolds) {
    CvSummary s;
    for (double acc : {0.5, 0.75, 1.0}) {
        FoldResult f;
        f.metrics.accuracy = acc;
        f.metrics.macro_f1 = acc / 2;
        s.folds.push_back(f);
    }
    summarize(s);
    EXPECT_DOUBLE_EQ(s.mean_accuracy, 0.75);
    EXPECT_DOUBLE_EQ(s.std_accuracy, 0.25);
    EXPECT_DOUBLE_EQ(s.mean_macro_f1, 0.375);
    auto j = to_json(s);
    EXPECT_EQ(j["per_fold"].size(), 3u);
    EXPECT_EQ(percent_cell(0.9, 0.1414213562), "90.00 ± 14.14");
}

TEST(Evaluate, HeldOutLogComesFromTestFolds) {
    auto ds = synth_dataset(4, 5, 3.0);
    tcn::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 0.01;
    ModelTemplate tpl{{4, 3, {1, 2}, 4}, tcn::Mode::Personalized, 3};
    auto spec = FoldSpec::kfold(4, 8);
    auto s = evaluate_cv(tpl, ds, spec, cfg);
    ASSERT_EQ(s.held_out.size(), ds.size());
    ASSERT_EQ(s.folds.size(), 4u);
    // Retrain fold by fold here and compare: each entry must equal the prediction of
    // the model that never saw that window.
    auto fa = assign_folds(ds, spec);
    const auto labels = tcn::task_labels(ds, cfg.task);
    for (std::size_t f = 0; f < fa.folds.size(); ++f) {
        auto train_ds = ds.subset(fa.folds[f].train);
        auto mc = tcn::make_config(train_ds, cfg.task, tpl.mode, tpl.arch);
        mc.labels = labels;
        auto m = tcn::train(tcn::ResTcnModel(mc, tpl.init_seed + f), train_ds, cfg).model;
        for (auto i : fa.folds[f].test) {
            EXPECT_EQ(s.held_out.entries[i].sample_id, ds.windows[i].sample_id);
            EXPECT_EQ(s.held_out.entries[i].confidence, m.forward(ds.windows[i]));
        }
    }
    std::int64_t total = 0;
    for (const auto& f : s.folds) total += f.matrix.total();
    EXPECT_EQ(total, static_cast<std::int64_t>(ds.size()));
}

TEST(Evaluate, ThreadedRunMatchesSequential) {
    auto ds = synth_dataset(3, 6, 3.0);
    tcn::TrainConfig cfg;
    cfg.epochs = 1;
    ModelTemplate tpl{{4, 3, {1}, 4}, tcn::Mode::Generalized, 1};
    auto a = evaluate_cv(tpl, ds, FoldSpec::loso(), cfg, {1});
    auto b = evaluate_cv(tpl, ds, FoldSpec::loso(), cfg, {3});
    EXPECT_EQ(to_json(a), to_json(b));
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(a.held_out.entries[i].confidence, b.held_out.entries[i].confidence);
}

TEST(Evaluate, IdentificationTenFoldOnSeventeenSubjects) {
    auto ds = synth_dataset(17, 7, 12.0);
    tcn::TrainConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 16;
    cfg.task = tcn::Task::SubjectIdentification;
    auto s = evaluate_cv({{8, 3, {1, 2, 4}, 8}, tcn::Mode::Generalized, 2}, ds, FoldSpec::kfold(10, 1), cfg);
    EXPECT_EQ(s.held_out.labels.size(), 17u);
    EXPECT_GE(s.mean_accuracy, 0.95);
}

TEST(Evaluate, ErrorsCarryFoldIndex) {
    auto ds = synth_dataset(3, 6, 2.0);
    tcn::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.input_norm = NormScheme::None;
    // Poison subject S02, which is in the training split of fold 0 under LOSO.
    for (auto& w : ds.windows)
        if (w.subject_id == "S02") w.data[0] = std::nan("");
    try {
        evaluate_cv({{4, 3, {1}, 4}, tcn::Mode::Generalized, 1}, ds, FoldSpec::loso(), cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "NonFiniteLoss");
        EXPECT_EQ(e.message().rfind("fold 0: ", 0), 0u) << e.what();
    }
    EXPECT_THROW(evaluate_cv({{4, 3, {1}, 4}, tcn::Mode::Personalized, 1}, ds, FoldSpec::loso(), cfg), Error);
}
