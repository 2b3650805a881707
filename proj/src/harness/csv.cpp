#include "icdm/harness/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace icdm::harness {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const CsvTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) {
    if (r.size() != table.header.size()) throw std::invalid_argument("write_csv: row width differs from header");
    line(r);
  }
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line)) t.rows.push_back(split(line));
  return t;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

CsvTable trials_table(const ExperimentConfig& cfg, const std::vector<double>& sinr,
                      const std::vector<std::vector<TrialResult>>& trials) {
  CsvTable t;
  t.header = {"sinr_db", "trial", "seed", "guidance", "mse_x_db", "mse_z_db", "map_mse_x_db",
              "map_mse_z_db", "lhs", "rhs", "lambda_min", "holds", "diverged"};
  if (cfg.record_time) t.header.push_back("wall_time");
  for (std::size_t g = 0; g < trials.size(); ++g) {
    for (std::size_t i = 0; i < trials[g].size(); ++i) {
      const auto& r = trials[g][i];
      std::vector<std::string> row = {format_double(sinr.at(g)),
                                      std::to_string(i),
                                      std::to_string(r.seed),
                                      std::string(to_string(cfg.guidance)),
                                      r.diverged ? "" : format_double(r.mse_x_db),
                                      r.diverged ? "" : format_double(r.mse_z_db),
                                      opt(r.map_mse_x_db),
                                      opt(r.map_mse_z_db),
                                      r.bound ? format_double(r.bound->lhs) : "",
                                      r.bound ? format_double(r.bound->rhs) : "",
                                      r.bound ? format_double(r.bound->lambda_min) : "",
                                      r.bound ? (r.bound->holds ? "1" : "0") : "",
                                      r.diverged ? "1" : "0"};
      if (cfg.record_time) row.push_back(format_double(r.wall_time));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

CsvTable sweep_table(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows) {
  CsvTable t;
  t.header = {"sinr_db",       "guidance",      "trials",       "diverged",          "mse_x_db_mean",
              "mse_x_db_std",  "mse_z_db_mean", "mse_z_db_std", "map_mse_x_db_mean", "map_mse_x_db_std"};
  for (const auto& r : rows) {
    t.rows.push_back({format_double(r.sinr_db), std::string(to_string(cfg.guidance)), std::to_string(r.trials),
                      std::to_string(r.diverged), format_double(r.mse_x_db.mean), format_double(r.mse_x_db.stddev),
                      format_double(r.mse_z_db.mean), format_double(r.mse_z_db.stddev),
                      r.map_mse_x_db ? format_double(r.map_mse_x_db->mean) : "",
                      r.map_mse_x_db ? format_double(r.map_mse_x_db->stddev) : ""});
  }
  return t;
}

CsvTable order_table(const std::vector<OrderRow>& rows) {
  CsvTable t;
  t.header = {"order", "steps", "error", "slope"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.order), std::to_string(r.steps), format_double(r.error),
                      format_double(r.slope)});
  }
  return t;
}

}  // namespace icdm::harness
