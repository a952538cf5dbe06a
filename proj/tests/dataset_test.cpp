#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <gtest/gtest.h>

#include "veritracer/dataset.hpp"

using namespace veritracer;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("vt_dataset_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_file(const std::string& name, const std::string& content) {
    const std::string path = (dir_ / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
  }

  fs::path dir_;
};

using DatasetTest = TempDir;

CsvSchemaSpec basic_schema() {
  CsvSchemaSpec s;
  s.columns = {{"a", ColumnSpec::Kind::Continuous}, {"c", ColumnSpec::Kind::Categorical}};
  s.label_column = "y";
  s.label_kind = "binary";
  s.test_fraction = 0.0;
  return s;
}

}  // namespace

TEST_F(DatasetTest, BlobsShapeAndDeterminism) {
  BlobsSpec spec;
  spec.n = 200;
  auto a = make_blobs(spec, 9);
  auto b = make_blobs(spec, 9);
  auto c = make_blobs(spec, 10);
  EXPECT_EQ(a.train_x.size() + a.test_x.size(), 200u);
  EXPECT_EQ(a.test_x.size(), 40u);
  EXPECT_EQ(a.train_x, b.train_x);
  EXPECT_EQ(a.train_y, b.train_y);
  EXPECT_NE(a.train_x, c.train_x);
  for (const auto& row : a.train_x)
    for (double v : row) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  // Both classes present in both splits.
  EXPECT_TRUE(std::count(a.train_y.begin(), a.train_y.end(), 0) > 0);
  EXPECT_TRUE(std::count(a.train_y.begin(), a.train_y.end(), 1) > 0);
  EXPECT_TRUE(std::count(a.test_y.begin(), a.test_y.end(), 0) > 0);
}

TEST_F(DatasetTest, SyntheticShiftAddsRelabeledCluster) {
  BlobsSpec spec;
  spec.n = 150;
  spec.shift_points = 30;
  auto [original, shifted] = make_synthetic_shift(spec, 4);
  EXPECT_EQ(shifted.train_x.size(), original.train_x.size() + 30);
  EXPECT_EQ(shifted.test_x, original.test_x);
  for (std::size_t i = original.train_y.size(); i < shifted.train_y.size(); ++i)
    EXPECT_EQ(shifted.train_y[i], 1);
}

TEST_F(DatasetTest, LooSubsetRemovesCeilFraction) {
  BlobsSpec spec;
  spec.n = 130;  // 104 train rows -> ceil(1.04) = 2 removed
  auto ds = make_blobs(spec, 1);
  ASSERT_EQ(ds.train_x.size(), 104u);
  auto sub = make_loo_subset(ds, 7, 0.01);
  EXPECT_EQ(sub.train_x.size(), 102u);
  EXPECT_EQ(sub.test_x, ds.test_x);
  auto sub2 = make_loo_subset(ds, 7, 0.01);
  EXPECT_EQ(sub.train_x, sub2.train_x);
  auto sub3 = make_loo_subset(ds, 8, 0.01);
  EXPECT_NE(sub.train_x, sub3.train_x);
}

TEST_F(DatasetTest, LooRejectsTinyDatasets) {
  BlobsSpec spec;
  spec.n = 60;
  auto ds = make_blobs(spec, 1);
  EXPECT_THROW(make_loo_subset(ds, 1, 0.01), std::invalid_argument);
}

TEST_F(DatasetTest, MedianAndBinarize) {
  EXPECT_DOUBLE_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median_of({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median_of({}), std::invalid_argument);
  EXPECT_EQ(binarize_labels({1.0, 2.5, 2.0, 3.0}, 2.5), (std::vector<int>{0, 0, 0, 1}));
}

TEST_F(DatasetTest, CsvBasicLoad) {
  auto path = write_file("d.csv",
                         "a,c,y\n"
                         "1.0,red,0\n"
                         "2.0,blue,1\n"
                         "3.0,red,1\n");
  auto ds = load_csv(path, basic_schema(), 0);
  EXPECT_EQ(ds.train_x.size(), 3u);
  EXPECT_EQ(ds.schema.width(), 3u);  // a + one-hot(red, blue)
  for (const auto& row : ds.train_x) {
    EXPECT_GE(row[0], 0.0);
    EXPECT_LE(row[0], 1.0);
    EXPECT_DOUBLE_EQ(row[1] + row[2], 1.0);
  }
}

TEST_F(DatasetTest, CsvQuotedFieldsAndCrlf) {
  auto path = write_file("q.csv",
                         "a,c,y\r\n"
                         "1.0,\"v,1\",0\r\n"
                         "2.0,\"say \"\"hi\"\"\",1\r\n");
  auto ds = load_csv(path, basic_schema(), 0);
  EXPECT_EQ(ds.train_x.size(), 2u);
  EXPECT_EQ(ds.schema.width(), 3u);
}

TEST_F(DatasetTest, CsvMissingValuesDropped) {
  auto path = write_file("m.csv",
                         "a,c,y\n"
                         "1.0,red,0\n"
                         ",red,1\n"
                         "2.0,blue,\n"
                         "3.0,blue,1\n");
  auto ds = load_csv(path, basic_schema(), 0);
  EXPECT_EQ(ds.train_x.size(), 2u);
  bool logged = false;
  for (const auto& t : ds.transform_log)
    if (t.find("dropped_missing=2") != std::string::npos) logged = true;
  EXPECT_TRUE(logged);
}

TEST_F(DatasetTest, CsvErrors) {
  auto schema = basic_schema();
  EXPECT_THROW(load_csv((dir_ / "nope.csv").string(), schema, 0), std::runtime_error);
  auto ragged = write_file("r.csv", "a,c,y\n1.0,red\n");
  EXPECT_THROW(load_csv(ragged, schema, 0), std::runtime_error);
  auto nonnum = write_file("n.csv", "a,c,y\nxyz,red,0\n");
  EXPECT_THROW(load_csv(nonnum, schema, 0), std::runtime_error);
  auto badlabel = write_file("b.csv", "a,c,y\n1.0,red,2\n");
  EXPECT_THROW(load_csv(badlabel, schema, 0), std::runtime_error);
  auto missingcol = write_file("mc.csv", "a,y\n1.0,0\n");
  EXPECT_THROW(load_csv(missingcol, schema, 0), std::runtime_error);
}

TEST_F(DatasetTest, MedianLabelFittedOnTrainOnly) {
  // 10 rows, test_fraction 0.2: median computed over the 8 training rows
  // only, so moving an extreme test row must not change the threshold.
  std::string body = "a,c,y\n";
  for (int i = 0; i < 10; ++i)
    body += std::to_string(i) + ".0,red," + std::to_string(10 + i) + ".0\n";
  auto path = write_file("med.csv", body);
  auto schema = basic_schema();
  schema.label_kind = "median";
  schema.test_fraction = 0.2;
  auto ds = load_csv(path, schema, 3);
  ASSERT_EQ(ds.train_x.size(), 8u);
  std::string median_line;
  for (const auto& t : ds.transform_log)
    if (t.rfind("label_median=", 0) == 0) median_line = t;
  ASSERT_FALSE(median_line.empty());
  // Threshold must be a value achievable from 8 train labels, and labels on
  // both sides must exist.
  EXPECT_TRUE(std::count(ds.train_y.begin(), ds.train_y.end(), 0) > 0);
  EXPECT_TRUE(std::count(ds.train_y.begin(), ds.train_y.end(), 1) > 0);
}

TEST_F(DatasetTest, ConstantMedianLabelRejected) {
  auto path = write_file("const.csv",
                         "a,c,y\n"
                         "1.0,red,5.0\n"
                         "2.0,red,5.0\n"
                         "3.0,red,5.0\n");
  auto schema = basic_schema();
  schema.label_kind = "median";
  EXPECT_THROW(load_csv(path, schema, 0), std::runtime_error);
}

TEST_F(DatasetTest, MinMaxFittedOnTrainSplitOnly) {
  // Extreme value in a known-test row must not define the scale.
  std::string body = "a,c,y\n";
  for (int i = 0; i < 20; ++i)
    body += std::to_string(i) + ".0,red," + std::to_string(i % 2) + "\n";
  auto path = write_file("mm.csv", body);
  auto schema = basic_schema();
  schema.test_fraction = 0.25;
  auto ds = load_csv(path, schema, 11);
  // Train rows all land exactly in [0,1] with both endpoints attained.
  double lo = 1e9, hi = -1e9;
  for (const auto& r : ds.train_x) {
    lo = std::min(lo, r[0]);
    hi = std::max(hi, r[0]);
  }
  EXPECT_DOUBLE_EQ(lo, 0.0);
  EXPECT_DOUBLE_EQ(hi, 1.0);
}

TEST_F(DatasetTest, MatrixCacheRoundTrip) {
  std::vector<std::vector<double>> m = {{1.0, -2.5, 0x1.23456789abcdfp-3},
                                        {0.0, 1e300, -0.0}};
  auto path = (dir_ / "m.bin").string();
  write_matrix_cache(path, m);
  auto back = read_matrix_cache(path);
  EXPECT_EQ(back, m);
}

TEST_F(DatasetTest, MatrixCacheRejectsBadMagic) {
  auto path = write_file("bad.bin", "NOTAMAGICxxxxxxxxxxxxxxxxxxx");
  EXPECT_THROW(read_matrix_cache(path), std::runtime_error);
  auto truncated = (dir_ / "t.bin").string();
  write_matrix_cache(truncated, {{1.0, 2.0}});
  {
    std::ofstream out(truncated, std::ios::binary | std::ios::in);
    out.seekp(0, std::ios::beg);
  }
  fs::resize_file(truncated, 26);
  EXPECT_THROW(read_matrix_cache(truncated), std::runtime_error);
}
