#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dendro/dataset.hpp"
#include "support/synth.hpp"

using namespace dendro;

namespace {

std::string temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("dendro_" + name);
  std::ofstream(p) << body;
  return p.string();
}

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadCsv, ParsesHeaderAndSortsClassNames) {
  const auto path = temp_file("abc.csv", "a,b,y\n1,2,A\n3,4,B\n5,6,A\n");
  const auto ds = load_csv(path, std::string("y"), true);
  EXPECT_EQ(ds.rows(), 3u);
  EXPECT_EQ(ds.cols(), 2u);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(ds.labels, (Labels{0, 1, 0}));
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.features(2, 1), 6.0);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{2, 1}));
}

TEST(LoadCsv, LabelByIndexWithoutHeader) {
  const auto path = temp_file("noheader.csv", "B,1.5,2\nA,3,4e-1\n");
  const auto ds = load_csv(path, std::size_t{0}, false);
  EXPECT_EQ(ds.labels, (Labels{1, 0}));
  EXPECT_DOUBLE_EQ(ds.features(1, 1), 0.4);
}

TEST(LoadCsv, QuotedFieldsAndCrLf) {
  const auto path = temp_file("quoted.csv", "\"x, one\",y\r\n1,\"a,b\"\r\n2,c\r\n");
  const auto ds = load_csv(path, std::string("y"), true);
  EXPECT_EQ(ds.feature_names[0], "x, one");
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a,b", "c"}));
}

TEST(LoadCsv, RejectsNaNWithRowAndColumn) {
  const auto path = temp_file("nan.csv", "a,b,y\n1,2,A\n3,NaN,B\n");
  const auto msg = error_of([&] { load_csv(path, std::string("y"), true); });
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column 1"), std::string::npos) << msg;
  EXPECT_THROW(load_csv(temp_file("inf.csv", "a,y\ninf,A\n"), std::string("y"), true), IoError);
  EXPECT_THROW(load_csv(temp_file("junk.csv", "a,y\n1.5x,A\n"), std::string("y"), true), IoError);
}

TEST(LoadCsv, StructuralErrors) {
  EXPECT_THROW(load_csv("/nonexistent/file.csv", std::size_t{0}, true), IoError);
  EXPECT_THROW(load_csv(temp_file("dup.csv", "a,a,y\n1,2,A\n"), std::string("y"), true), IoError);
  EXPECT_THROW(load_csv(temp_file("ragged.csv", "a,b,y\n1,2,A\n1,B\n"), std::string("y"), true), IoError);
  EXPECT_THROW(load_csv(temp_file("nolabel.csv", "a,y\n1,\n"), std::string("y"), true), IoError);
  EXPECT_THROW(load_csv(temp_file("missingcol.csv", "a,y\n1,A\n"), std::string("z"), true), IoError);
  EXPECT_THROW(load_csv(temp_file("empty.csv", "a,y\n"), std::string("y"), true), IoError);
}

TEST(LoadCsv, WriteRoundTripIsExact) {
  auto ds = synth::gaussian_classes({{0.1, 1.0 / 3.0}, {5e-300, -2.5}}, 7, 1.3, 42);
  ds.features(0, 0) = 0.1 + 0.2;
  const auto path = (std::filesystem::temp_directory_path() / "dendro_roundtrip.csv").string();
  write_csv(ds, path);
  const auto back = load_csv(path, std::string("label"), true);
  EXPECT_EQ(back.class_names, ds.class_names);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.feature_names, ds.feature_names);
  ASSERT_EQ(back.features.rows(), ds.features.rows());
  EXPECT_TRUE((back.features.array() == ds.features.array()).all());
}

TEST(Dataset, ValidateRejectsMissingClassAndNonFinite) {
  Matrix x(2, 1);
  x << 1, 2;
  EXPECT_THROW(make_dataset(x, Labels{0, 0}, 2), InvalidArgument);
  x(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(make_dataset(x, Labels{0, 1}, 2), InvalidArgument);
}

TEST(Dataset, SubsetComposesProvenance) {
  const auto ds = synth::gaussian_classes({{0.0}, {1.0}}, 5, 0.1, 1);
  const Indices a{9, 3, 1, 0};
  const auto s1 = ds.subset(a, SliceRole::train);
  const Indices b{2, 0};
  const auto s2 = s1.subset(b, SliceRole::internal);
  EXPECT_EQ(s2.origin, (Indices{1, 9}));
  EXPECT_EQ(s2.role, SliceRole::internal);
  EXPECT_EQ(s2.features(1, 0), ds.features(9, 0));
}

TEST(Splits, NineAndNineKeepsEightForTraining) {
  const auto ds = synth::gaussian_classes({{0.0}, {1.0}}, 9, 0.1, 3);
  const SplitPlan plan{11, 5, 0.9};
  for (const auto& s : monte_carlo_splits(ds, plan)) {
    EXPECT_EQ(s.train.size(), 16u);
    EXPECT_EQ(s.test.size(), 2u);
  }
}

TEST(Splits, PartitionStratificationAndDeterminism) {
  const auto ds = synth::gaussian_classes({{0.0}, {1.0}, {2.0}, {3.0}}, 1, 0.1, 5);
  // uneven class sizes: 6, 37, 100, 251 rows
  Matrix x(394, 1);
  Labels y;
  const int sizes[4] = {6, 37, 100, 251};
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < sizes[c]; ++i) {
      x(static_cast<Eigen::Index>(y.size()), 0) = c;
      y.push_back(c);
    }
  const auto big = make_dataset(x, y, 4);
  const SplitPlan plan{99, 20, 0.9};
  const auto a = monte_carlo_splits(big, plan);
  const auto b = monte_carlo_splits(big, plan);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t f = 0; f < a.size(); ++f) {
    EXPECT_EQ(a[f].train, b[f].train);
    EXPECT_EQ(a[f].test, b[f].test);
    std::vector<int> seen(big.rows(), 0);
    for (auto r : a[f].train) ++seen[r];
    for (auto r : a[f].test) ++seen[r];
    for (int v : seen) ASSERT_EQ(v, 1);
    std::vector<int> test_count(4, 0), train_count(4, 0);
    for (auto r : a[f].test) ++test_count[static_cast<std::size_t>(big.labels[r])];
    for (auto r : a[f].train) ++train_count[static_cast<std::size_t>(big.labels[r])];
    for (int c = 0; c < 4; ++c) {
      EXPECT_GE(train_count[static_cast<std::size_t>(c)], 1);
      EXPECT_LE(std::abs(test_count[static_cast<std::size_t>(c)] - std::lround(0.1 * sizes[c])), 1);
    }
  }
  EXPECT_NE(a[0].test, a[1].test);
  const auto other = monte_carlo_splits(big, SplitPlan{100, 2, 0.9});
  EXPECT_NE(other[0].test, a[0].test);
  (void)ds;
}

TEST(Splits, RejectsBadPlan) {
  const auto ds = synth::gaussian_classes({{0.0}, {1.0}}, 4, 0.1, 3);
  EXPECT_THROW(monte_carlo_splits(ds, SplitPlan{1, 0, 0.9}), InvalidArgument);
  EXPECT_THROW(monte_carlo_splits(ds, SplitPlan{1, 2, 1.0}), InvalidArgument);
}

TEST(Splits, StratifiedKFoldPartitions) {
  const auto ds = synth::gaussian_classes({{0.0}, {1.0}, {2.0}}, 10, 0.1, 3);
  const auto folds = stratified_kfold(ds.labels, 3, 3, 17);
  std::vector<int> seen(ds.rows(), 0);
  for (const auto& f : folds) {
    EXPECT_EQ(f.train.size() + f.test.size(), ds.rows());
    std::vector<int> per(3, 0);
    for (auto r : f.test) {
      ++seen[r];
      ++per[static_cast<std::size_t>(ds.labels[r])];
    }
    for (int c : per) EXPECT_GE(c, 3);
  }
  for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(ZScore, FitsOnOneSliceOnly) {
  Matrix train(3, 2), test(1, 2);
  train << 1, 5, 2, 5, 3, 5;
  test << 4, 7;
  const auto z = ZScore::fit(train);
  z.apply(train);
  z.apply(test);
  EXPECT_NEAR(train.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(test(0, 0), 2.0, 1e-12);  // (4-2)/1 with sample sd 1
  EXPECT_TRUE(std::isfinite(test(0, 1)));  // constant column left centered
}
