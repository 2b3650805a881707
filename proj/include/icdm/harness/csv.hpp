#pragma once

// Comma-separated tables with a header row. Doubles are printed with 17
// significant digits so a parse reproduces them exactly.

#include <string>
#include <vector>

#include "icdm/harness/experiment.hpp"

namespace icdm::harness {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string format_double(double v);

/// Throws std::runtime_error naming the path when it cannot be written.
void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

// trials: sinr_db,trial,seed,guidance,mse_x_db,mse_z_db,map_mse_x_db,map_mse_z_db,
//         lhs,rhs,lambda_min,holds,diverged[,wall_time]
CsvTable trials_table(const ExperimentConfig& cfg, const std::vector<double>& sinr,
                      const std::vector<std::vector<TrialResult>>& trials);

// sweep: sinr_db,guidance,trials,diverged,mse_x_db_mean,mse_x_db_std,
//        mse_z_db_mean,mse_z_db_std,map_mse_x_db_mean,map_mse_x_db_std
CsvTable sweep_table(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows);

// order: order,steps,error,slope
CsvTable order_table(const std::vector<OrderRow>& rows);

}  // namespace icdm::harness
