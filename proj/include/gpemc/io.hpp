#pragma once

#include "gpemc/adaptive.hpp"
#include "gpemc/gp.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace gpemc::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Writes {points, potentials, gradients, per_datum_path, rho, nugget}.
/// Per-datum data go to a CSV beside the JSON (stacked layout, one row per
/// augmented observation) when present.
void save_design(const std::filesystem::path& json_path, const DesignSet& design, const Hyperparameters& hyper);
std::pair<DesignSet, Hyperparameters> load_design(const std::filesystem::path& json_path);

/// Streams chain.csv rows: iter,theta_1..theta_D,logpost,accepted,kernel,regen,wall_ns.
class ChainWriter {
 public:
  ChainWriter(const std::filesystem::path& path, Index dim);
  void write(long long iter, const Vector& theta, double logpost, bool accepted, const std::string& kernel, bool regen,
             long long wall_ns);
  void close();

 private:
  std::ofstream out_;
};

struct ChainData {
  std::vector<long long> iter;
  Matrix theta;
  Vector logpost;
  std::vector<int> accepted;
  std::vector<std::string> kernel;
  std::vector<int> regen;
  std::vector<long long> wall_ns;
  Index size() const { return theta.rows(); }
};
/// Throws std::runtime_error on malformed files.
ChainData read_chain(const std::filesystem::path& path);

void write_events(const std::filesystem::path& path, const std::vector<AdaptEvent>& events);

/// One row per datum with the given column names.
void write_data(const std::filesystem::path& path, const std::vector<std::string>& columns, const Matrix& rows);

}  // namespace gpemc::io
