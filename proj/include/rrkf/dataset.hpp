#pragma once

#include "rrkf/common.hpp"
#include "rrkf/filter.hpp"

#include <string>
#include <vector>

namespace rrkf {

/// One measurement vector at a time point.
struct DatasetRow {
  double time = 0.0;
  Vector values;
};

/// Writes `time,component,value` rows (component = index into y_l) for every
/// observed entry. Values are printed with 17 significant digits so a round
/// trip is exact.
void export_dataset(const std::string& path, const ObservationSequence& observations);
/// Same layout for a state trajectory (n x N, columns at `times`).
void export_trajectory(const std::string& path, const std::vector<double>& times, const Matrix& trajectory);

std::vector<DatasetRow> import_dataset(const std::string& path);

/// Overwrites the measurement values of `observations` with `rows`, matched
/// by time (relative tolerance 1e-12). Throws if a row has no matching
/// observed entry or the wrong length.
void apply_dataset(ObservationSequence& observations, const std::vector<DatasetRow>& rows);

}  // namespace rrkf
