#include "rrkf/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace rrkf {

namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  out << "time,component,value\n";
  return out;
}

}  // namespace

void export_dataset(const std::string& path, const ObservationSequence& observations) {
  std::ofstream out = open_output(path);
  for (const Observation& obs : observations) {
    if (!obs.has_value()) continue;
    for (Index k = 0; k < obs.value->size(); ++k) out << obs.time << ',' << k << ',' << (*obs.value)(k) << '\n';
  }
}

void export_trajectory(const std::string& path, const std::vector<double>& times, const Matrix& trajectory) {
  require(static_cast<Index>(times.size()) == trajectory.cols(), "export_trajectory: times/columns mismatch");
  std::ofstream out = open_output(path);
  for (Index l = 0; l < trajectory.cols(); ++l) {
    for (Index k = 0; k < trajectory.rows(); ++k) out << times[static_cast<std::size_t>(l)] << ',' << k << ',' << trajectory(k, l) << '\n';
  }
}

std::vector<DatasetRow> import_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("time,component,value", 0) != 0) {
    throw std::invalid_argument(path + ": missing header 'time,component,value'");
  }
  std::vector<DatasetRow> rows;
  std::map<Index, double> current;
  double current_time = 0.0;
  bool open = false;
  auto flush = [&]() {
    if (!open) return;
    DatasetRow row;
    row.time = current_time;
    row.values.resize(static_cast<Index>(current.size()));
    Index expect = 0;
    for (const auto& [k, v] : current) {
      if (k != expect) throw std::invalid_argument(path + ": components at time " + std::to_string(current_time) + " are not contiguous");
      row.values(expect++) = v;
    }
    rows.push_back(std::move(row));
    current.clear();
  };
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ss.imbue(std::locale::classic());
    double t = 0.0, v = 0.0;
    long long k = 0;
    char c1 = 0, c2 = 0;
    if (!(ss >> t >> c1 >> k >> c2 >> v) || c1 != ',' || c2 != ',' || k < 0) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    if (!open || t != current_time) {
      flush();
      current_time = t;
      open = true;
    }
    current[static_cast<Index>(k)] = v;
  }
  flush();
  return rows;
}

void apply_dataset(ObservationSequence& observations, const std::vector<DatasetRow>& rows) {
  std::size_t j = 0;
  for (const DatasetRow& row : rows) {
    while (j < observations.size() &&
           std::abs(observations[j].time - row.time) > 1e-12 * std::max(1.0, std::abs(row.time))) {
      ++j;
    }
    if (j == observations.size() || !observations[j].model) {
      throw std::invalid_argument("apply_dataset: no observed entry at time " + std::to_string(row.time));
    }
    require(row.values.size() == observations[j].model->dim(), "apply_dataset: measurement length mismatch");
    observations[j].value = row.values;
    ++j;
  }
}

}  // namespace rrkf
