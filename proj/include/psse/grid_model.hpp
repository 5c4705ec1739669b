#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace psse {

using Complex = std::complex<double>;

/// Complex bus voltage phasors, one entry per (internal) bus index.
using VoltageState = Eigen::VectorXcd;

/// Raised when a case file cannot be parsed or fails validation. Line and
/// column are 1-based; zero means the error is not tied to a text position.
class CaseError : public std::runtime_error {
 public:
  CaseError(const std::string& message, int line = 0, int column = 0);

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

struct Bus {
  int index = 0;        // internal, contiguous 0..N-1
  int external_id = 0;  // id as written in the case file
  double shunt_conductance = 0.0;
  double shunt_susceptance = 0.0;
  bool is_reference = false;
  // Operating point stored in the case (MATPOWER Vm/Va); used as the default
  // "true" profile by experiments. Angle in radians.
  double voltage_magnitude = 1.0;
  double voltage_angle = 0.0;
};

struct Branch {
  int from_bus = 0;  // internal bus index
  int to_bus = 0;
  double series_resistance = 0.0;
  double series_reactance = 0.0;
  double total_charging_susceptance = 0.0;
  double tap_ratio = 1.0;
  double phase_shift = 0.0;  // radians
  bool in_service = true;
};

struct NetworkCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;

  int bus_count() const { return static_cast<int>(buses.size()); }
  int in_service_branch_count() const;
  int reference_bus() const;

  /// Internal index of the bus with the given external id, or -1.
  int index_of(int external_id) const;

  /// Voltage profile stored in the case file (Vm * exp(j Va)).
  VoltageState stored_profile() const;
};

/// Parses a MATPOWER .m case or the JSON case format; the format is detected
/// from the first non-blank character.
NetworkCase parse_case(std::string_view text);
NetworkCase parse_matpower_case(std::string_view text);
NetworkCase parse_json_case(std::string_view text);
NetworkCase load_case(const std::string& path);

/// Checks endpoint references, impedances and the reference bus. Called by
/// every parser; exposed for programmatically built cases.
void validate_case(const NetworkCase& network);

/// Ring network of `bus_count` identical lines; bus 0 is the reference. Used
/// for the scaling checks.
NetworkCase make_ring_case(int bus_count, double r = 0.01, double x = 0.1, double b = 0.02);

struct Triplet {
  int row = 0;
  int col = 0;
  Complex value;
};

/// Coordinate-format complex matrix kept sorted by (row, col) with duplicate
/// coordinates summed.
class SparseComplexMatrix {
 public:
  SparseComplexMatrix() = default;
  SparseComplexMatrix(int rows, int cols, std::vector<Triplet> triplets);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::span<const Triplet> entries() const { return entries_; }
  std::span<const Triplet> row(int r) const;
  Complex coeff(int r, int c) const;

  Eigen::VectorXcd multiply(const Eigen::VectorXcd& x) const;
  Eigen::MatrixXcd to_dense() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Triplet> entries_;
  std::vector<int> row_start_;
};

struct AdmittanceModel {
  SparseComplexMatrix Y;   // N x N bus admittance
  SparseComplexMatrix Yf;  // L x N, from-end branch currents
  SparseComplexMatrix Yt;  // L x N, to-end branch currents
  std::vector<int> from_bus;  // per Yf/Yt row
  std::vector<int> to_bus;
  std::vector<int> branch_of_row;  // row -> position in NetworkCase::branches
  int reference_bus = 0;

  int bus_count() const { return Y.rows(); }
  int line_count() const { return Yf.rows(); }
  /// Number of distinct neighbours of bus n in the in-service graph.
  int degree(int bus) const;
};

AdmittanceModel build_admittance(const NetworkCase& network);

enum class MeasurementKind : std::uint8_t { Vsq, Pinj, Qinj, Pf, Qf, Pt, Qt };

inline constexpr MeasurementKind kAllKinds[] = {
    MeasurementKind::Vsq, MeasurementKind::Pinj, MeasurementKind::Qinj, MeasurementKind::Pf,
    MeasurementKind::Qf,  MeasurementKind::Pt,   MeasurementKind::Qt};

std::string_view to_string(MeasurementKind kind);
MeasurementKind kind_from_string(std::string_view name);
bool is_flow(MeasurementKind kind);
bool is_injection(MeasurementKind kind);

/// Sparse Hermitian matrix H of one quadratic measurement v^H H v.
struct MeasurementMatrix {
  MeasurementKind kind = MeasurementKind::Vsq;
  int location = 0;  // bus index for Vsq/Pinj/Qinj, Yf row for flows
  std::vector<Triplet> entries;  // sorted by (row, col)
  std::vector<int> support;      // sorted distinct bus indices

  void scale(double factor);
  double frobenius_norm() const;
  /// Dense block of H restricted to `support` (rows and columns in support order).
  Eigen::MatrixXcd support_block() const;
};

MeasurementMatrix measurement_matrix(const AdmittanceModel& model, MeasurementKind kind,
                                     int location);

/// Re(v^H H v), summed over the sparse entries only.
double evaluate(const MeasurementMatrix& matrix, const VoltageState& v);

}  // namespace psse
