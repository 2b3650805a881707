#include "icdm/harness/score_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "icdm/harness/csv.hpp"

namespace icdm::harness {

void save_affine(const AffineScoreModel<double>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "icdm-affine " << model.t_max() << ' ' << model.dim() << '\n';
  for (int t = 0; t <= model.t_max(); ++t) {
    out << t;
    for (Index j = 0; j < model.dim(); ++j) out << ' ' << format_double(model.gain()(t, j));
    for (Index j = 0; j < model.dim(); ++j) out << ' ' << format_double(model.bias()(t, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

AffineScoreModel<double> load_affine(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open affine table '" + path + "'");
  std::string magic;
  int t_max = -1;
  Index dim = -1;
  in >> magic >> t_max >> dim;
  if (!in || magic != "icdm-affine" || t_max < 0 || dim < 1) {
    throw std::runtime_error("'" + path + "' is not an affine score table");
  }
  MatrixXd gain(t_max + 1, dim), bias(t_max + 1, dim);
  for (int t = 0; t <= t_max; ++t) {
    int row = -1;
    in >> row;
    if (row != t) throw std::runtime_error("'" + path + "': expected row for step " + std::to_string(t));
    for (Index j = 0; j < dim; ++j) in >> gain(t, j);
    for (Index j = 0; j < dim; ++j) in >> bias(t, j);
    if (!in) throw std::runtime_error("'" + path + "': truncated row " + std::to_string(t));
  }
  return AffineScoreModel<double>(std::move(gain), std::move(bias));
}

}  // namespace icdm::harness
