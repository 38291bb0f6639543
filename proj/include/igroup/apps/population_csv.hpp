#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "igroup/apps/csv.hpp"
#include "igroup/error.hpp"
#include "igroup/population.hpp"

namespace igroup {

/// Population table: `id`, optional `theta_hat`, covariate columns `z` or
/// `z1`, `z2`, ..., and observation columns `x1`, `x2`, ... (blank cells
/// allowed for shorter series). Cells that are present must parse.
inline Population population_from_table(const csv::Table& t) {
  const auto id_col = t.require({"id"})[0];
  const auto theta_col = t.column("theta_hat");
  std::vector<std::size_t> z_cols;
  std::vector<std::size_t> x_cols;
  auto digits_after = [](const std::string& name, char prefix, bool allow_bare) {
    if (name.empty() || name[0] != prefix) return false;
    if (name.size() == 1) return allow_bare;
    for (std::size_t i = 1; i < name.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
    }
    return true;
  };
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (digits_after(t.header[c], 'z', true)) z_cols.push_back(c);
    if (digits_after(t.header[c], 'x', false)) x_cols.push_back(c);
  }
  if (!theta_col && z_cols.empty() && x_cols.empty()) {
    fail(ErrorKind::Schema, t.origin + ": expected id plus theta_hat, z/z1..zd or x1..xn columns");
  }
  if (t.rows.empty()) fail(ErrorKind::Schema, t.origin + ": no data rows");
  if (t.malformed > 0) {
    fail(ErrorKind::Schema, t.origin + ": " + std::to_string(t.malformed) + " row(s) with the wrong field count");
  }

  auto number = [&](std::size_t r, std::size_t c) {
    auto v = csv::parse_double(t.rows[r][c]);
    if (!v) {
      fail(ErrorKind::InvalidInput, t.origin + ":" + std::to_string(t.line_numbers[r]) + ": column '" +
                                        t.header[c] + "' is not a finite number");
    }
    return *v;
  };

  std::vector<IndividualRecord> records;
  records.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    IndividualRecord rec;
    rec.id = t.rows[r][id_col];
    if (rec.id.empty()) fail(ErrorKind::InvalidInput, t.origin + ":" + std::to_string(t.line_numbers[r]) + ": empty id");
    if (theta_col && !t.rows[r][*theta_col].empty()) rec.theta_hat = number(r, *theta_col);
    if (!z_cols.empty()) {
      std::vector<double> z;
      for (auto c : z_cols) z.push_back(number(r, c));
      rec.z = std::move(z);
    }
    for (auto c : x_cols) {
      if (!t.rows[r][c].empty()) rec.x.push_back(number(r, c));
    }
    if (!rec.theta_hat && !rec.x.empty()) rec.theta_hat = sample_mean(rec.x);
    records.push_back(std::move(rec));
  }
  return Population(std::move(records), t.origin);
}

inline Population load_population_csv(const std::string& path) { return population_from_table(csv::read_file(path)); }

}  // namespace igroup
