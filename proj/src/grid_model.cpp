#include "psse/grid_model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace psse {

namespace {

std::string with_position(const std::string& message, int line, int column) {
  if (line <= 0) return message;
  std::ostringstream os;
  os << "line " << line << ", column " << column << ": " << message;
  return os.str();
}

void position_of(std::string_view text, std::size_t offset, int& line, int& column) {
  line = 1;
  column = 1;
  offset = std::min(offset, text.size());
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
}

}  // namespace

CaseError::CaseError(const std::string& message, int line, int column)
    : std::runtime_error(with_position(message, line, column)), line_(line), column_(column) {}

int NetworkCase::in_service_branch_count() const {
  return static_cast<int>(std::count_if(branches.begin(), branches.end(),
                                        [](const Branch& b) { return b.in_service; }));
}

int NetworkCase::reference_bus() const {
  for (const auto& bus : buses)
    if (bus.is_reference) return bus.index;
  throw CaseError("case has no reference bus");
}

int NetworkCase::index_of(int external_id) const {
  for (const auto& bus : buses)
    if (bus.external_id == external_id) return bus.index;
  return -1;
}

VoltageState NetworkCase::stored_profile() const {
  VoltageState v(bus_count());
  for (const auto& bus : buses) v(bus.index) = std::polar(bus.voltage_magnitude, bus.voltage_angle);
  return v;
}

void validate_case(const NetworkCase& network) {
  const int n = network.bus_count();
  if (n == 0) throw CaseError("case has no buses");
  int references = 0;
  for (int i = 0; i < n; ++i) {
    if (network.buses[i].index != i) throw CaseError("bus indices are not contiguous");
    references += network.buses[i].is_reference ? 1 : 0;
  }
  if (references == 0) throw CaseError("case has no reference bus");
  if (references > 1) throw CaseError("case has more than one reference bus");
  for (std::size_t k = 0; k < network.branches.size(); ++k) {
    const auto& br = network.branches[k];
    const std::string where = "branch " + std::to_string(k + 1);
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
      throw CaseError(where + " references a bus that does not exist");
    if (br.from_bus == br.to_bus) throw CaseError(where + " connects a bus to itself");
    if (br.series_resistance == 0.0 && br.series_reactance == 0.0)
      throw CaseError(where + " has zero series impedance");
    if (!(br.tap_ratio > 0.0)) throw CaseError(where + " has a non-positive tap ratio");
  }
  if (!(network.base_mva > 0.0)) throw CaseError("baseMVA must be positive");
}

NetworkCase parse_case(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') return parse_json_case(text);
  return parse_matpower_case(text);
}

NetworkCase load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CaseError("cannot open case file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_case(buffer.str());
}

NetworkCase parse_json_case(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 0;
    int column = 0;
    position_of(text, e.byte > 0 ? e.byte - 1 : 0, line, column);
    throw CaseError("invalid JSON case", line, column);
  }
  NetworkCase network;
  try {
    network.base_mva = doc.value("base_mva", 100.0);
    std::unordered_map<int, int> index_of;
    for (const auto& jb : doc.at("buses")) {
      Bus bus;
      bus.external_id = jb.at("id").get<int>();
      bus.index = network.bus_count();
      bus.shunt_conductance = jb.value("gs", 0.0);
      bus.shunt_susceptance = jb.value("bs", 0.0);
      bus.is_reference = jb.value("reference", false);
      bus.voltage_magnitude = jb.value("vm", 1.0);
      bus.voltage_angle = jb.value("va", 0.0);
      if (!index_of.emplace(bus.external_id, bus.index).second)
        throw CaseError("duplicate bus id " + std::to_string(bus.external_id));
      network.buses.push_back(bus);
    }
    for (const auto& jl : doc.at("branches")) {
      Branch br;
      const int from = jl.at("from").get<int>();
      const int to = jl.at("to").get<int>();
      const auto f = index_of.find(from);
      const auto t = index_of.find(to);
      if (f == index_of.end() || t == index_of.end())
        throw CaseError("branch " + std::to_string(from) + "-" + std::to_string(to) +
                        " references a bus that does not exist");
      br.from_bus = f->second;
      br.to_bus = t->second;
      br.series_resistance = jl.at("r").get<double>();
      br.series_reactance = jl.at("x").get<double>();
      br.total_charging_susceptance = jl.value("b", 0.0);
      br.tap_ratio = jl.value("tap", 1.0);
      if (br.tap_ratio == 0.0) br.tap_ratio = 1.0;
      br.phase_shift = jl.value("shift", 0.0);
      br.in_service = jl.value("status", 1) != 0;
      network.branches.push_back(br);
    }
  } catch (const json::exception& e) {
    throw CaseError(std::string("malformed JSON case: ") + e.what());
  }
  validate_case(network);
  return network;
}

NetworkCase make_ring_case(int bus_count, double r, double x, double b) {
  if (bus_count < 3) throw std::invalid_argument("ring case needs at least 3 buses");
  NetworkCase network;
  for (int i = 0; i < bus_count; ++i) {
    Bus bus;
    bus.index = i;
    bus.external_id = i + 1;
    bus.is_reference = i == 0;
    network.buses.push_back(bus);
  }
  for (int i = 0; i < bus_count; ++i) {
    Branch br;
    br.from_bus = i;
    br.to_bus = (i + 1) % bus_count;
    br.series_resistance = r;
    br.series_reactance = x;
    br.total_charging_susceptance = b;
    network.branches.push_back(br);
  }
  validate_case(network);
  return network;
}

// --- sparse storage ---------------------------------------------------------

SparseComplexMatrix::SparseComplexMatrix(int rows, int cols, std::vector<Triplet> triplets)
    : rows_(rows), cols_(cols) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw std::out_of_range("sparse entry outside matrix bounds");
    if (!entries_.empty() && entries_.back().row == t.row && entries_.back().col == t.col)
      entries_.back().value += t.value;
    else
      entries_.push_back(t);
  }
  row_start_.assign(rows + 1, 0);
  for (const auto& t : entries_) ++row_start_[t.row + 1];
  for (int r = 0; r < rows; ++r) row_start_[r + 1] += row_start_[r];
}

std::span<const Triplet> SparseComplexMatrix::row(int r) const {
  return std::span<const Triplet>(entries_).subspan(row_start_[r], row_start_[r + 1] - row_start_[r]);
}

Complex SparseComplexMatrix::coeff(int r, int c) const {
  for (const auto& t : row(r))
    if (t.col == c) return t.value;
  return {};
}

Eigen::VectorXcd SparseComplexMatrix::multiply(const Eigen::VectorXcd& x) const {
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(rows_);
  for (const auto& t : entries_) y(t.row) += t.value * x(t.col);
  return y;
}

Eigen::MatrixXcd SparseComplexMatrix::to_dense() const {
  Eigen::MatrixXcd dense = Eigen::MatrixXcd::Zero(rows_, cols_);
  for (const auto& t : entries_) dense(t.row, t.col) = t.value;
  return dense;
}

// --- admittance -------------------------------------------------------------

int AdmittanceModel::degree(int bus) const {
  std::unordered_set<int> neighbours;
  for (int r = 0; r < line_count(); ++r) {
    if (from_bus[r] == bus) neighbours.insert(to_bus[r]);
    if (to_bus[r] == bus) neighbours.insert(from_bus[r]);
  }
  return static_cast<int>(neighbours.size());
}

AdmittanceModel build_admittance(const NetworkCase& network) {
  const int n = network.bus_count();
  AdmittanceModel model;
  model.reference_bus = network.reference_bus();

  std::vector<Triplet> y;
  std::vector<Triplet> yf;
  std::vector<Triplet> yt;
  int row = 0;
  for (std::size_t k = 0; k < network.branches.size(); ++k) {
    const auto& br = network.branches[k];
    if (!br.in_service) continue;
    // MATPOWER pi model: series admittance, half charging at each end, complex
    // tap on the from side.
    const Complex ys = 1.0 / Complex(br.series_resistance, br.series_reactance);
    const Complex tap = std::polar(br.tap_ratio, br.phase_shift);
    const Complex ytt = ys + Complex(0.0, br.total_charging_susceptance / 2.0);
    const Complex yff = ytt / std::norm(tap);
    const Complex yft = -ys / std::conj(tap);
    const Complex ytf = -ys / tap;
    const int f = br.from_bus;
    const int t = br.to_bus;
    yf.push_back({row, f, yff});
    yf.push_back({row, t, yft});
    yt.push_back({row, f, ytf});
    yt.push_back({row, t, ytt});
    y.push_back({f, f, yff});
    y.push_back({f, t, yft});
    y.push_back({t, f, ytf});
    y.push_back({t, t, ytt});
    model.from_bus.push_back(f);
    model.to_bus.push_back(t);
    model.branch_of_row.push_back(static_cast<int>(k));
    ++row;
  }
  for (const auto& bus : network.buses) {
    const Complex shunt(bus.shunt_conductance, bus.shunt_susceptance);
    if (shunt != Complex{}) y.push_back({bus.index, bus.index, shunt});
  }
  model.Y = SparseComplexMatrix(n, n, std::move(y));
  model.Yf = SparseComplexMatrix(row, n, std::move(yf));
  model.Yt = SparseComplexMatrix(row, n, std::move(yt));
  return model;
}

// --- measurement matrices ---------------------------------------------------

std::string_view to_string(MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::Vsq: return "Vsq";
    case MeasurementKind::Pinj: return "Pinj";
    case MeasurementKind::Qinj: return "Qinj";
    case MeasurementKind::Pf: return "Pf";
    case MeasurementKind::Qf: return "Qf";
    case MeasurementKind::Pt: return "Pt";
    case MeasurementKind::Qt: return "Qt";
  }
  return "?";
}

MeasurementKind kind_from_string(std::string_view name) {
  for (auto kind : kAllKinds)
    if (to_string(kind) == name) return kind;
  throw std::invalid_argument("unknown measurement kind '" + std::string(name) + "'");
}

bool is_flow(MeasurementKind kind) {
  return kind == MeasurementKind::Pf || kind == MeasurementKind::Qf ||
         kind == MeasurementKind::Pt || kind == MeasurementKind::Qt;
}

bool is_injection(MeasurementKind kind) {
  return kind == MeasurementKind::Pinj || kind == MeasurementKind::Qinj;
}

void MeasurementMatrix::scale(double factor) {
  for (auto& e : entries) e.value *= factor;
}

double MeasurementMatrix::frobenius_norm() const {
  double sum = 0.0;
  for (const auto& e : entries) sum += std::norm(e.value);
  return std::sqrt(sum);
}

Eigen::MatrixXcd MeasurementMatrix::support_block() const {
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXcd block = Eigen::MatrixXcd::Zero(k, k);
  auto local = [this](int bus) {
    return std::lower_bound(support.begin(), support.end(), bus) - support.begin();
  };
  for (const auto& e : entries) block(local(e.row), local(e.col)) = e.value;
  return block;
}

namespace {

// Builds (R^H e_r e_n^T + e_n e_r^T R) / 2 for a sparse row R, or
// (R^H e_r e_n^T - e_n e_r^T R) / 2j when `reactive`. Shared by the injection
// (R = row n of Y) and flow (R = row of Yf or Yt) matrices.
MeasurementMatrix outer_with_row(MeasurementKind kind, int location, int bus,
                                 std::span<const Triplet> row, bool reactive) {
  const Complex denom = reactive ? Complex(0.0, 2.0) : Complex(2.0, 0.0);
  const double sign = reactive ? -1.0 : 1.0;
  std::vector<Triplet> entries;
  entries.reserve(2 * row.size());
  for (const auto& t : row) {
    entries.push_back({t.col, bus, std::conj(t.value) / denom});
    entries.push_back({bus, t.col, sign * t.value / denom});
  }
  // Reuse the sorting and duplicate merging of the sparse container.
  int n = bus + 1;
  for (const auto& t : row) n = std::max(n, t.col + 1);
  SparseComplexMatrix merged(n, n, std::move(entries));
  MeasurementMatrix h;
  h.kind = kind;
  h.location = location;
  for (const auto& e : merged.entries()) {
    Triplet t = e;
    if (t.row == t.col) t.value = Complex(t.value.real(), 0.0);
    if (t.value != Complex{}) h.entries.push_back(t);
  }
  for (const auto& e : h.entries) h.support.push_back(e.row);
  std::sort(h.support.begin(), h.support.end());
  h.support.erase(std::unique(h.support.begin(), h.support.end()), h.support.end());
  return h;
}

}  // namespace

MeasurementMatrix measurement_matrix(const AdmittanceModel& model, MeasurementKind kind,
                                     int location) {
  const int n = model.bus_count();
  const int l = model.line_count();
  if (is_flow(kind)) {
    if (location < 0 || location >= l)
      throw std::out_of_range("branch location " + std::to_string(location) + " is out of range");
  } else if (location < 0 || location >= n) {
    throw std::out_of_range("bus location " + std::to_string(location) + " is out of range");
  }
  switch (kind) {
    case MeasurementKind::Vsq: {
      MeasurementMatrix h;
      h.kind = kind;
      h.location = location;
      h.entries.push_back({location, location, Complex(1.0, 0.0)});
      h.support.push_back(location);
      return h;
    }
    case MeasurementKind::Pinj:
    case MeasurementKind::Qinj:
      return outer_with_row(kind, location, location, model.Y.row(location),
                            kind == MeasurementKind::Qinj);
    case MeasurementKind::Pf:
    case MeasurementKind::Qf:
      return outer_with_row(kind, location, model.from_bus[location], model.Yf.row(location),
                            kind == MeasurementKind::Qf);
    case MeasurementKind::Pt:
    case MeasurementKind::Qt:
      return outer_with_row(kind, location, model.to_bus[location], model.Yt.row(location),
                            kind == MeasurementKind::Qt);
  }
  throw std::invalid_argument("unknown measurement kind");
}

double evaluate(const MeasurementMatrix& matrix, const VoltageState& v) {
  Complex sum{};
  for (const auto& e : matrix.entries) sum += std::conj(v(e.row)) * e.value * v(e.col);
#ifndef NDEBUG
  const double scale = v.squaredNorm() * std::max(1.0, matrix.frobenius_norm());
  assert(std::abs(sum.imag()) <= 1e-12 * std::max(scale, 1.0) + 1e-300);
#endif
  return sum.real();
}

}  // namespace psse
