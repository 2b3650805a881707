#pragma once

// Affine score-model table. Text format:
//
//   icdm-affine <T> <dim>
//   <t> <D_t[0]> ... <D_t[dim-1]> <c_t[0]> ... <c_t[dim-1]>     (T+1 rows, t = 0..T)
//
// Values use 17 significant digits.

#include <string>

#include "icdm/score_models.hpp"

namespace icdm::harness {

void save_affine(const AffineScoreModel<double>& model, const std::string& path);
AffineScoreModel<double> load_affine(const std::string& path);

}  // namespace icdm::harness
