#pragma once

#include "igsaft/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace igsaft {

/// One observed unit: instruments, exposure, log-time and event flag.
struct Observation {
  VectorXd z;
  double d = 0.0;
  double y = 0.0;
  int delta = 1;
};

/**
 * Immutable columnar dataset of n observations.
 *
 * Row i holds instruments z.row(i), exposure d(i), observed log-time y(i) and
 * event indicator delta(i) (1 = failure observed, 0 = right-censored).
 */
class Dataset {
 public:
  Dataset() = default;
  Dataset(MatrixXd z, VectorXd d, VectorXd y, VectorXi delta);

  Index n() const noexcept { return y_.size(); }
  Index p() const noexcept { return z_.cols(); }

  const MatrixXd& z() const noexcept { return z_; }
  const VectorXd& d() const noexcept { return d_; }
  const VectorXd& y() const noexcept { return y_; }
  const VectorXi& delta() const noexcept { return delta_; }

  Observation observation(Index i) const;

  /// Rows in the given order.
  Dataset subset(std::span<const Index> rows) const;

  /// Same rows with the outcome replaced.
  Dataset with_outcome(VectorXd y, VectorXi delta) const;

  double censoring_rate() const;

 private:
  MatrixXd z_;
  VectorXd d_;
  VectorXd y_;
  VectorXi delta_;
};

enum class TimeScale { raw, log };

/// Mapping from CSV header names to dataset fields.
struct ColumnConfig {
  std::string time = "time";
  std::string status = "status";
  std::string exposure = "exposure";
  std::vector<std::string> ivs;
  TimeScale time_scale = TimeScale::raw;

  /// Default instrument names z1..zp with log-time, as written by write_csv.
  static ColumnConfig standard(Index p);
};

Dataset load_csv(const std::string& path, const ColumnConfig& config);

/// Writes the dataset with 17 significant digits; the time column holds log-time
/// when config.time_scale is log and exp(y) otherwise.
void write_csv(const std::string& path, const Dataset& dataset, const ColumnConfig& config);

struct ValidationReport {
  double censoring_rate = 0.0;
  Findings findings;
};

ValidationReport validate(const Dataset& dataset, double correlation_threshold = 0.2);

}  // namespace igsaft
