#include "igsaft/data.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace igsaft {
namespace {

using testing::temp_path;
using testing::toy_dataset;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

ColumnConfig two_ivs() {
  ColumnConfig c;
  c.ivs = {"z1", "z2"};
  return c;
}

TEST(Dataset, RejectsInconsistentColumns) {
  EXPECT_THROW(Dataset(MatrixXd::Zero(3, 1), VectorXd::Zero(2), VectorXd::Zero(3), VectorXi::Ones(3)), ValueError);
  EXPECT_THROW(Dataset(MatrixXd::Zero(3, 1), VectorXd::Zero(3), VectorXd::Zero(3), VectorXi::Zero(3)), ValueError);
  VectorXi bad = VectorXi::Ones(3);
  bad(1) = 2;
  EXPECT_THROW(Dataset(MatrixXd::Zero(3, 1), VectorXd::Zero(3), VectorXd::Zero(3), bad), ValueError);
}

TEST(Dataset, SubsetKeepsRequestedOrder) {
  const Dataset ds = toy_dataset(10, 3, 1);
  const std::vector<Index> rows{7, 2, 5};
  const Dataset sub = ds.subset(rows);
  ASSERT_EQ(sub.n(), 3);
  for (Index r = 0; r < 3; ++r) {
    EXPECT_EQ(sub.y()(r), ds.y()(rows[static_cast<std::size_t>(r)]));
    EXPECT_EQ(sub.z().row(r), ds.z().row(rows[static_cast<std::size_t>(r)]));
  }
}

TEST(Dataset, CensoringRate) {
  VectorXi delta(4);
  delta << 1, 0, 1, 0;
  const Dataset ds(MatrixXd::Random(4, 1), VectorXd::Zero(4), VectorXd::LinSpaced(4, 0, 3), delta);
  EXPECT_DOUBLE_EQ(ds.censoring_rate(), 0.5);
}

TEST(Csv, RoundTripIsExact) {
  const Dataset ds = toy_dataset(50, 4, 2, -1.0, 3.0);
  const auto cfg = ColumnConfig::standard(4);
  const auto path = temp_path("roundtrip.csv");
  write_csv(path, ds, cfg);
  const Dataset back = load_csv(path, cfg);
  EXPECT_EQ(back.y(), ds.y());
  EXPECT_EQ(back.d(), ds.d());
  EXPECT_EQ(back.z(), ds.z());
  EXPECT_EQ(back.delta(), ds.delta());
}

TEST(Csv, RawTimeIsLogged) {
  const auto path = temp_path("raw.csv");
  write_text(path, "time,status,exposure,z1,z2\n1,1,0.5,1,2\n2.718281828459045,0,1,3,4\n");
  const Dataset ds = load_csv(path, two_ivs());
  EXPECT_NEAR(ds.y()(0), 0.0, 1e-15);
  EXPECT_NEAR(ds.y()(1), 1.0, 1e-15);
  EXPECT_EQ(ds.delta()(1), 0);
  EXPECT_EQ(ds.z()(1, 1), 4.0);
}

TEST(Csv, MissingColumnNamesTheColumn) {
  const auto path = temp_path("nocol.csv");
  write_text(path, "time,status,exposure,z1\n1,1,0.5,1\n");
  try {
    load_csv(path, two_ivs());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("z2"), std::string::npos);
  }
}

TEST(Csv, BadValuesReportTheRow) {
  const auto path = temp_path("badrow.csv");
  write_text(path, "time,status,exposure,z1,z2\n1,1,0.5,1,2\n2,3,1,3,4\n");
  try {
    load_csv(path, two_ivs());
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  write_text(path, "time,status,exposure,z1,z2\n1,1,NA,1,2\n");
  EXPECT_THROW(load_csv(path, two_ivs()), ValueError);
  write_text(path, "time,status,exposure,z1,z2\n0,1,1,1,2\n");
  EXPECT_THROW(load_csv(path, two_ivs()), ValueError);
  EXPECT_THROW(load_csv(temp_path("does_not_exist.csv"), two_ivs()), SchemaError);
}

TEST(Validate, FlagsConstantAndCorrelatedColumns) {
  MatrixXd z(6, 3);
  z << 1, 1, 5, 2, 2, 5, 3, 3.1, 5, 4, 4, 5, 5, 5.2, 5, 6, 6, 5;
  const Dataset ds(z, VectorXd::LinSpaced(6, 0, 1), VectorXd::LinSpaced(6, 0, 5), VectorXi::Ones(6));
  const auto report = validate(ds);
  bool constant = false, correlated = false;
  for (const auto& f : report.findings) {
    constant = constant || (f.code == "constant_column" && f.message.find("instrument 3") != std::string::npos);
    correlated = correlated || (f.code == "instrument_correlation" && f.message.find("(1,2)") != std::string::npos);
  }
  EXPECT_TRUE(constant);
  EXPECT_TRUE(correlated);
  EXPECT_EQ(report.censoring_rate, 0.0);
}

}  // namespace
}  // namespace igsaft
