#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "attelig/data.hpp"
#include "attelig/error.hpp"

namespace attelig {

namespace {

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view cell, std::size_t line, std::string_view column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ", column '" +
                                           std::string(column) + "': '" + std::string(cell) +
                                           "' is not a number");
  }
  return v;
}

int parse_binary(std::string_view cell, std::size_t line, std::string_view column) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ", column '" +
                                         std::string(column) + "' must be 0 or 1, got '" +
                                         std::string(cell) + "'");
}

double parse_covariate(const Covariate& c, std::string_view cell, std::size_t line) {
  if (c.kind == CovariateKind::Numeric) return parse_number(cell, line, c.name);
  auto idx = CovariateSchema::level_index(c, cell);
  if (!idx) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": level '" +
                                           std::string(cell) + "' not declared for '" + c.name + "'");
  }
  return static_cast<double>(*idx);
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw Error(ErrorCode::InvalidArgument, "cannot format number");
  return std::string(buf, ptr);
}

CoarsenedDataset parse_csv(std::string_view text, const CovariateSchema& schema) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      auto line = trim(text.substr(start, nl - start));
      lines.push_back(line);
      start = nl + 1;
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::SchemaMismatch, "CSV has no header row");

  auto header = split_row(lines[0]);
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].remove_prefix(3);

  constexpr std::size_t kMissing = static_cast<std::size_t>(-1);
  std::size_t col_id = kMissing, col_a = kMissing, col_y = kMissing, col_r = kMissing;
  std::vector<std::size_t> col_cov(schema.covariates().size(), kMissing);
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto name = trim(header[j]);
    std::size_t* slot = nullptr;
    if (name == "id") slot = &col_id;
    else if (name == "a") slot = &col_a;
    else if (name == "y") slot = &col_y;
    else if (name == "r") slot = &col_r;
    else {
      const auto& covs = schema.covariates();
      auto it = std::find_if(covs.begin(), covs.end(), [&](const Covariate& c) { return c.name == name; });
      if (it == covs.end()) {
        throw Error(ErrorCode::SchemaMismatch, "unknown column '" + std::string(name) + "'");
      }
      slot = &col_cov[static_cast<std::size_t>(it - covs.begin())];
    }
    if (*slot != kMissing) {
      throw Error(ErrorCode::SchemaMismatch, "duplicate column '" + std::string(name) + "'");
    }
    *slot = j;
  }
  for (auto [col, name] : {std::pair{col_id, "id"}, {col_a, "a"}, {col_y, "y"}, {col_r, "r"}}) {
    if (col == kMissing) throw Error(ErrorCode::SchemaMismatch, std::string("missing column '") + name + "'");
  }
  for (std::size_t c = 0; c < col_cov.size(); ++c) {
    if (col_cov[c] == kMissing) {
      throw Error(ErrorCode::SchemaMismatch, "missing column '" + schema.covariates()[c].name + "'");
    }
  }

  std::vector<CoarsenedObservation> records;
  records.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (lines[li].empty()) continue;
    auto cells = split_row(lines[li]);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " fields, got " +
                                             std::to_string(cells.size()));
    }
    for (auto& cell : cells) cell = trim(cell);

    CoarsenedObservation obs;
    obs.id = std::string(cells[col_id]);
    obs.a = parse_binary(cells[col_a], line_no, "a");
    obs.y = parse_number(cells[col_y], line_no, "y");
    obs.r = parse_binary(cells[col_r], line_no, "r");
    obs.lStar.resize(schema.lstar_size());
    for (std::size_t p = 0; p < schema.lstar_size(); ++p) {
      const std::size_t c = schema.lstar_columns()[p];
      const auto cell = cells[col_cov[c]];
      if (cell.empty()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) +
                                               ": fully observed covariate '" +
                                               schema.covariates()[c].name + "' is empty");
      }
      obs.lStar[p] = parse_covariate(schema.covariates()[c], cell, line_no);
    }
    std::size_t populated = 0;
    for (std::size_t c : schema.elig_columns()) populated += cells[col_cov[c]].empty() ? 0 : 1;
    const bool want_present = obs.r == 1;
    if ((want_present && populated != schema.elig_size()) || (!want_present && populated != 0)) {
      throw Error(ErrorCode::InconsistentMissingness,
                  "line " + std::to_string(line_no) + ": r = " + std::to_string(obs.r) +
                      " but " + std::to_string(populated) + " of " +
                      std::to_string(schema.elig_size()) + " eligibility cells are populated");
    }
    if (want_present) {
      std::vector<double> le(schema.elig_size());
      for (std::size_t p = 0; p < schema.elig_size(); ++p) {
        const std::size_t c = schema.elig_columns()[p];
        le[p] = parse_covariate(schema.covariates()[c], cells[col_cov[c]], line_no);
      }
      obs.lEligMissing = std::move(le);
    }
    records.push_back(std::move(obs));
  }
  if (records.empty()) throw Error(ErrorCode::ParseError, "CSV has no data rows");
  return CoarsenedDataset(schema, std::move(records));
}

CoarsenedDataset load_csv(const std::filesystem::path& path, const CovariateSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema);
}

std::string to_csv(const CoarsenedDataset& data) {
  const auto& schema = data.schema();
  std::string out = "id,a,y,r";
  for (std::size_t c : schema.lstar_columns()) out += "," + schema.covariates()[c].name;
  for (std::size_t c : schema.elig_columns()) out += "," + schema.covariates()[c].name;
  out += "\n";
  auto cell = [](const Covariate& c, double v) {
    if (c.kind == CovariateKind::Categorical) return c.levels.at(static_cast<std::size_t>(v));
    return format_double(v);
  };
  for (const auto& obs : data.records()) {
    out += obs.id + "," + std::to_string(obs.a) + "," + format_double(obs.y) + "," + std::to_string(obs.r);
    for (std::size_t p = 0; p < schema.lstar_size(); ++p) {
      out += "," + cell(schema.covariates()[schema.lstar_columns()[p]], obs.lStar[p]);
    }
    for (std::size_t p = 0; p < schema.elig_size(); ++p) {
      out += ",";
      if (obs.lEligMissing) out += cell(schema.covariates()[schema.elig_columns()[p]], (*obs.lEligMissing)[p]);
    }
    out += "\n";
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const CoarsenedDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << to_csv(data);
}

}  // namespace attelig
