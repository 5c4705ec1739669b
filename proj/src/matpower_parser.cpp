#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>
#include <unordered_map>

#include "psse/grid_model.hpp"

namespace psse {

namespace {

// Minimal reader for the subset of MATPOWER case syntax we need:
// `mpc.baseMVA = <number>;` and the numeric tables `mpc.bus = [ ... ];`,
// `mpc.branch = [ ... ];`. Everything else (gen, gencost, functions) is skipped.
class MatpowerReader {
 public:
  explicit MatpowerReader(std::string_view text) : text_(text) {}

  struct Table {
    std::vector<std::vector<double>> rows;
    std::vector<std::pair<int, int>> positions;  // (line, column) of each row start
  };

  std::optional<double> scalar(std::string_view name) {
    const auto at = find_assignment(name);
    if (!at) return std::nullopt;
    pos_ = *at;
    skip_blank();
    return number();
  }

  std::optional<Table> table(std::string_view name) {
    const auto at = find_assignment(name);
    if (!at) return std::nullopt;
    pos_ = *at;
    skip_blank();
    if (peek() != '[') fail("expected '[' after mpc." + std::string(name) + " =");
    ++pos_;
    Table table;
    std::vector<double> row;
    std::pair<int, int> row_pos{0, 0};
    auto finish_row = [&] {
      if (!row.empty()) {
        table.rows.push_back(std::move(row));
        table.positions.push_back(row_pos);
        row.clear();
      }
    };
    while (true) {
      skip_spaces_and_comments();
      if (pos_ >= text_.size()) fail("unterminated table mpc." + std::string(name));
      const char c = text_[pos_];
      if (c == ']') {
        ++pos_;
        finish_row();
        break;
      }
      if (c == ';' || c == '\n') {
        ++pos_;
        finish_row();
        continue;
      }
      if (c == ',' || c == '\r') {
        ++pos_;
        continue;
      }
      if (row.empty()) row_pos = position(pos_);
      row.push_back(number());
    }
    return table;
  }

  [[noreturn]] void fail(const std::string& message) const {
    const auto [line, column] = position(pos_);
    throw CaseError(message, line, column);
  }

  std::pair<int, int> position(std::size_t offset) const {
    int line = 1;
    int column = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    return {line, column};
  }

 private:
  // Offset just past `mpc.<name> =`, ignoring occurrences inside comments.
  std::optional<std::size_t> find_assignment(std::string_view name) const {
    const std::string key = "mpc." + std::string(name);
    std::size_t line_start = 0;
    while (line_start < text_.size()) {
      std::size_t line_end = text_.find('\n', line_start);
      if (line_end == std::string_view::npos) line_end = text_.size();
      const auto line = text_.substr(line_start, line_end - line_start);
      const auto comment = line.find('%');
      const auto code = line.substr(0, comment);
      auto hit = code.find(key);
      while (hit != std::string_view::npos) {
        std::size_t p = hit + key.size();
        while (p < code.size() && (code[p] == ' ' || code[p] == '\t')) ++p;
        const bool boundary = hit == 0 || !(std::isalnum(static_cast<unsigned char>(code[hit - 1])) || code[hit - 1] == '_');
        if (boundary && p < code.size() && code[p] == '=') return line_start + p + 1;
        hit = code.find(key, hit + 1);
      }
      line_start = line_end + 1;
    }
    return std::nullopt;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_blank() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  void skip_spaces_and_comments() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ' ' || c == '\t') {
        ++pos_;
      } else if (c == '%') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (c == '.' && text_.substr(pos_, 3) == "...") {
        // line continuation
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
        if (pos_ < text_.size()) ++pos_;
      } else {
        break;
      }
    }
  }

  double number() {
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double value = 0.0;
    // from_chars rejects a leading '+'
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) fail("expected a number");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kBranchColumns = 11;  // F_BUS .. BR_STATUS

}  // namespace

NetworkCase parse_matpower_case(std::string_view text) {
  MatpowerReader reader(text);
  NetworkCase network;

  const auto base = reader.scalar("baseMVA");
  if (!base) throw CaseError("missing mpc.baseMVA");
  network.base_mva = *base;

  const auto bus_table = reader.table("bus");
  if (!bus_table) throw CaseError("missing mpc.bus table");
  const auto branch_table = reader.table("branch");
  if (!branch_table) throw CaseError("missing mpc.branch table");

  std::unordered_map<int, int> index_of;
  for (std::size_t i = 0; i < bus_table->rows.size(); ++i) {
    const auto& row = bus_table->rows[i];
    const auto [line, column] = bus_table->positions[i];
    if (row.size() < 9)
      throw CaseError("bus row has " + std::to_string(row.size()) + " columns, expected at least 9",
                      line, column);
    for (std::size_t c : {0, 1, 4, 5, 7, 8})
      if (!std::isfinite(row[c])) throw CaseError("non-finite value in bus row", line, column);
    Bus bus;
    bus.external_id = static_cast<int>(row[0]);
    bus.index = network.bus_count();
    bus.is_reference = static_cast<int>(row[1]) == 3;
    bus.shunt_conductance = row[4] / network.base_mva;
    bus.shunt_susceptance = row[5] / network.base_mva;
    bus.voltage_magnitude = row[7];
    bus.voltage_angle = row[8] * std::numbers::pi / 180.0;
    if (!index_of.emplace(bus.external_id, bus.index).second)
      throw CaseError("duplicate bus id " + std::to_string(bus.external_id), line, column);
    network.buses.push_back(bus);
  }

  for (std::size_t i = 0; i < branch_table->rows.size(); ++i) {
    const auto& row = branch_table->rows[i];
    const auto [line, column] = branch_table->positions[i];
    if (row.size() < kBranchColumns)
      throw CaseError("branch row has " + std::to_string(row.size()) + " columns, expected at least " +
                          std::to_string(kBranchColumns),
                      line, column);
    for (std::size_t c : {0, 1, 2, 3, 4, 8, 9, 10})
      if (!std::isfinite(row[c])) throw CaseError("non-finite value in branch row", line, column);
    const int from = static_cast<int>(row[0]);
    const int to = static_cast<int>(row[1]);
    const auto f = index_of.find(from);
    const auto t = index_of.find(to);
    if (f == index_of.end() || t == index_of.end())
      throw CaseError("branch " + std::to_string(from) + "-" + std::to_string(to) +
                          " references bus " + std::to_string(f == index_of.end() ? from : to) +
                          " which does not exist",
                      line, column);
    Branch br;
    br.from_bus = f->second;
    br.to_bus = t->second;
    br.series_resistance = row[2];
    br.series_reactance = row[3];
    br.total_charging_susceptance = row[4];
    br.tap_ratio = row[8] == 0.0 ? 1.0 : row[8];
    br.phase_shift = row[9] * std::numbers::pi / 180.0;
    br.in_service = row[10] != 0.0;
    if (br.series_resistance == 0.0 && br.series_reactance == 0.0)
      throw CaseError("branch " + std::to_string(from) + "-" + std::to_string(to) +
                          " has zero series impedance",
                      line, column);
    network.branches.push_back(br);
  }

  validate_case(network);
  return network;
}

}  // namespace psse
