#include "gpemc/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gpemc::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

json matrix_json(const Matrix& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Matrix json_matrix(const json& a, const char* what) {
  if (!a.is_array() || a.empty()) throw std::runtime_error(std::string("design: '") + what + "' must be a non-empty array");
  const Index r = static_cast<Index>(a.size()), c = static_cast<Index>(a[0].size());
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(a[static_cast<std::size_t>(i)].size()) != c)
      throw std::runtime_error(std::string("design: ragged '") + what + "'");
    for (Index j = 0; j < c; ++j) m(i, j) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

Vector json_vector(const json& a, const char* what) {
  if (!a.is_array()) throw std::runtime_error(std::string("design: '") + what + "' must be an array");
  Vector v(static_cast<Index>(a.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = a[static_cast<std::size_t>(i)].get<double>();
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return v;
}

}  // namespace

void save_design(const fs::path& json_path, const DesignSet& design, const Hyperparameters& hyper) {
  design.validate();
  json j;
  j["points"] = matrix_json(design.points);
  j["potentials"] = vector_json(design.potentials);
  j["gradients"] = design.gradients ? matrix_json(*design.gradients) : json(nullptr);
  if (design.has_per_datum()) {
    fs::path pd = json_path;
    pd.replace_extension();
    pd += "_per_datum.csv";
    const Matrix U = design.stacked_per_datum();
    std::ofstream out(pd);
    if (!out) throw std::runtime_error("cannot write " + pd.string());
    for (Index i = 0; i < U.rows(); ++i) {
      for (Index k = 0; k < U.cols(); ++k) out << (k ? "," : "") << format_double(U(i, k));
      out << '\n';
    }
    j["per_datum_path"] = pd.filename().string();
  } else {
    j["per_datum_path"] = nullptr;
  }
  j["rho"] = vector_json(hyper.rho);
  j["nugget"] = hyper.nugget;
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << j.dump(2) << '\n';
}

std::pair<DesignSet, Hyperparameters> load_design(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot read " + json_path.string());
  const json j = json::parse(in);
  DesignSet d;
  d.points = json_matrix(j.at("points"), "points");
  d.potentials = json_vector(j.at("potentials"), "potentials");
  if (j.contains("gradients") && !j["gradients"].is_null()) d.gradients = json_matrix(j["gradients"], "gradients");
  if (j.contains("per_datum_path") && !j["per_datum_path"].is_null()) {
    const fs::path pd = json_path.parent_path() / j["per_datum_path"].get<std::string>();
    std::ifstream pin(pd);
    if (!pin) throw std::runtime_error("cannot read " + pd.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(pin, line)) {
      if (line.empty()) continue;
      std::vector<double> r;
      for (const std::string& f : split(line, ',')) r.push_back(parse_double(f));
      rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("empty per-datum file");
    Matrix U(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (Index i = 0; i < U.rows(); ++i) {
      if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != U.cols())
        throw std::runtime_error("ragged per-datum file");
      for (Index k = 0; k < U.cols(); ++k) U(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    d.set_stacked_per_datum(U);
  }
  d.validate();
  Hyperparameters h;
  h.rho = json_vector(j.at("rho"), "rho");
  h.nugget = j.value("nugget", 1e-8);
  h.validate(d.dim());
  return {std::move(d), std::move(h)};
}

ChainWriter::ChainWriter(const fs::path& path, Index dim) : out_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_ << "iter";
  for (Index d = 1; d <= dim; ++d) out_ << ",theta_" << d;
  out_ << ",logpost,accepted,kernel,regen,wall_ns\n";
}

void ChainWriter::write(long long iter, const Vector& theta, double logpost, bool accepted, const std::string& kernel,
                        bool regen, long long wall_ns) {
  out_ << iter;
  for (Index d = 0; d < theta.size(); ++d) out_ << ',' << format_double(theta(d));
  out_ << ',' << format_double(logpost) << ',' << (accepted ? 1 : 0) << ',' << kernel << ',' << (regen ? 1 : 0) << ','
       << wall_ns << '\n';
}

void ChainWriter::close() { out_.close(); }

ChainData read_chain(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty chain file " + path.string());
  const std::vector<std::string> head = split(line, ',');
  const Index ncol = static_cast<Index>(head.size());
  const Index D = ncol - 6;
  if (D < 1 || head[0] != "iter" || head[static_cast<std::size_t>(ncol - 5)] != "logpost")
    throw std::runtime_error("unexpected chain header in " + path.string());
  ChainData c;
  std::vector<std::vector<double>> th;
  std::vector<double> lp;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (static_cast<Index>(f.size()) != ncol) throw std::runtime_error("ragged chain row in " + path.string());
    c.iter.push_back(parse_int(f[0]));
    std::vector<double> t(static_cast<std::size_t>(D));
    for (Index d = 0; d < D; ++d) t[static_cast<std::size_t>(d)] = parse_double(f[static_cast<std::size_t>(1 + d)]);
    th.push_back(std::move(t));
    lp.push_back(parse_double(f[static_cast<std::size_t>(1 + D)]));
    c.accepted.push_back(static_cast<int>(parse_int(f[static_cast<std::size_t>(2 + D)])));
    c.kernel.push_back(f[static_cast<std::size_t>(3 + D)]);
    c.regen.push_back(static_cast<int>(parse_int(f[static_cast<std::size_t>(4 + D)])));
    c.wall_ns.push_back(parse_int(f[static_cast<std::size_t>(5 + D)]));
  }
  c.theta.resize(static_cast<Index>(th.size()), D);
  c.logpost.resize(static_cast<Index>(lp.size()));
  for (Index i = 0; i < c.theta.rows(); ++i) {
    for (Index d = 0; d < D; ++d) c.theta(i, d) = th[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    c.logpost(i) = lp[static_cast<std::size_t>(i)];
  }
  return c;
}

void write_events(const fs::path& path, const std::vector<AdaptEvent>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,event,design_size,holdout_mspe\n";
  for (const AdaptEvent& e : events)
    out << e.iter << ',' << e.kind << ',' << e.design_size << ','
        << (std::isnan(e.holdout_mspe) ? std::string() : format_double(e.holdout_mspe)) << '\n';
}

void write_data(const fs::path& path, const std::vector<std::string>& columns, const Matrix& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index k = 0; k < rows.cols(); ++k) out << (k ? "," : "") << format_double(rows(i, k));
    out << '\n';
  }
}

}  // namespace gpemc::io
