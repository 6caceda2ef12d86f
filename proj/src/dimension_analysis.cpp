#include "neuroalign/dimension_analysis.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "neuroalign/error.hpp"
#include "neuroalign/stats.hpp"

namespace neuroalign {

namespace fs = std::filesystem;

void DimensionEmbedding::validate() const {
  if (static_cast<std::size_t>(values.cols()) != dimension_names.size()) {
    throw ValidationError("embedding has " + std::to_string(values.cols()) + " columns but " +
                          std::to_string(dimension_names.size()) + " dimension names");
  }
  if (static_cast<std::size_t>(values.rows()) != stimulus_ids.size()) {
    throw ValidationError("embedding has " + std::to_string(values.rows()) + " rows but " +
                          std::to_string(stimulus_ids.size()) + " stimulus ids");
  }
  if (std::set<std::string>(dimension_names.begin(), dimension_names.end()).size() != dimension_names.size()) {
    throw ValidationError("embedding dimension names are not unique");
  }
  if (std::set<std::string>(stimulus_ids.begin(), stimulus_ids.end()).size() != stimulus_ids.size()) {
    throw ValidationError("embedding stimulus ids are not unique");
  }
  if (!values.allFinite()) throw ValidationError("embedding contains non-finite values");
}

DimensionEmbedding DimensionEmbedding::aligned_to(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, Eigen::Index> row_of;
  for (std::size_t i = 0; i < stimulus_ids.size(); ++i) row_of[stimulus_ids[i]] = static_cast<Eigen::Index>(i);
  DimensionEmbedding out;
  out.dimension_names = dimension_names;
  out.stimulus_ids = ids;
  out.values.resize(static_cast<Eigen::Index>(ids.size()), values.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = row_of.find(ids[i]);
    if (it == row_of.end()) throw ValidationError("embedding has no row for stimulus '" + ids[i] + "'");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(it->second);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

DimensionEmbedding read_embedding_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open embedding file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("embedding file is empty: " + path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "stimulus_id") {
    throw ValidationError("embedding header must start with 'stimulus_id' and name at least one dimension");
  }
  DimensionEmbedding emb;
  emb.dimension_names.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("embedding line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(header.size()));
    }
    emb.stimulus_ids.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ValidationError("embedding line " + std::to_string(line_no) + ", column '" + header[c] +
                              "': not a number: '" + cells[c] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  emb.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(emb.dimension_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) emb.values(i, c) = rows[i][c];
  emb.validate();
  return emb;
}

void write_embedding_csv(const fs::path& path, const DimensionEmbedding& embedding) {
  embedding.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "stimulus_id";
  for (const auto& n : embedding.dimension_names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < embedding.values.rows(); ++i) {
    out << embedding.stimulus_ids[i];
    for (Eigen::Index c = 0; c < embedding.values.cols(); ++c) out << ',' << embedding.values(i, c);
    out << '\n';
  }
}

Rdm feature_rdm(std::span<const double> column, std::vector<std::string> stimulus_ids) {
  const std::size_t n = column.size();
  if (n < 3) throw InvalidArgument("feature_rdm: need at least 3 stimuli, got " + std::to_string(n));
  if (stimulus_ids.size() != n) throw InvalidArgument("feature_rdm: stimulus id count mismatch");
  Rdm rdm;
  rdm.matrix = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::abs(column[i] - column[j]);
      rdm.matrix(i, j) = d;
      rdm.matrix(j, i) = d;
    }
  }
  rdm.stimulus_ids = std::move(stimulus_ids);
  rdm.method = RdmMethod::abs_feature_diff;
  rdm.validate();
  return rdm;
}

namespace {

Vector centered_ranks(const Rdm& rdm) {
  const auto upper = rdm.upper_triangle();
  const auto r = average_ranks(upper);
  Vector v = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
  return v.array() - v.mean();
}

void check_same_layout(const Rdm& ref, const Rdm& other, const std::string& what) {
  if (other.size() != ref.size() || other.stimulus_ids != ref.stimulus_ids) {
    throw InvalidArgument("partial_spearman: " + what + " has a different size or stimulus ordering");
  }
}

}  // namespace

PartialSpearmanResult partial_spearman(const Rdm& target, const Rdm& predictor, const std::vector<Rdm>& controls,
                                       const std::vector<std::string>& control_names) {
  check_same_layout(target, predictor, "predictor");
  for (std::size_t c = 0; c < controls.size(); ++c) check_same_layout(target, controls[c], "control " + std::to_string(c));
  if (!control_names.empty() && control_names.size() != controls.size()) {
    throw InvalidArgument("partial_spearman: control_names must match controls");
  }
  PartialSpearmanResult result;
  if (controls.empty()) {
    result.rho = compare_rdms(target, predictor);
    return result;
  }
  auto name_of = [&](std::size_t c) { return control_names.empty() ? "control " + std::to_string(c) : control_names[c]; };

  const Vector y = centered_ranks(target);
  const Vector x = centered_ranks(predictor);
  const auto m = y.size();
  const auto q = static_cast<Eigen::Index>(controls.size());
  if (m <= q + 1) throw InvalidArgument("partial_spearman: too few RDM entries for the number of controls");
  RowMatrix z(m, q);
  for (Eigen::Index c = 0; c < q; ++c) z.col(c) = centered_ranks(controls[c]);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(q - 1);
  const double singular_tol = static_cast<double>(m) * std::numeric_limits<double>::epsilon() * smax;
  if (smax <= 0.0 || smin <= singular_tol) {
    std::set<std::size_t> involved;
    for (Eigen::Index k = 0; k < q; ++k) {
      if (smax > 0.0 && s(k) > singular_tol) continue;
      const Vector v = svd.matrixV().col(k);
      const double vmax = v.cwiseAbs().maxCoeff();
      for (Eigen::Index c = 0; c < q; ++c) {
        if (std::abs(v(c)) > 1e-6 * vmax) involved.insert(static_cast<std::size_t>(c));
      }
    }
    std::string list;
    for (std::size_t c : involved) list += (list.empty() ? "" : ", ") + name_of(c);
    throw InvalidArgument("partial_spearman: singular control design; collinear controls: " + list);
  }
  double lambda = 0.0;
  if (smax / smin > 1e8) {
    lambda = smax * smax * 1e-8;
    result.ridge_lambda = lambda;
  }
  // Fitted values U diag(s^2 / (s^2 + lambda)) U^T v.
  const Eigen::MatrixXd& u = svd.matrixU();
  const Vector shrink = s.array().square() / (s.array().square() + lambda);
  auto residual = [&](const Vector& v) -> Vector {
    const Vector coef = (u.transpose() * v).cwiseProduct(shrink);
    return v - u * coef;
  };
  const Vector ry = residual(y);
  const Vector rx = residual(x);
  const double ny = ry.norm(), nx = rx.norm();
  if (ny <= 1e-9 * y.norm() || nx <= 1e-9 * x.norm() || ny == 0.0 || nx == 0.0) {
    result.rho = 0.0;
    return result;
  }
  result.rho = std::clamp(ry.dot(rx) / (ny * nx), -1.0, 1.0);
  return result;
}

DimensionProfile dimension_profile(const Rdm& model_rdm, const DimensionEmbedding& raw_embedding) {
  const DimensionEmbedding embedding = raw_embedding.aligned_to(model_rdm.stimulus_ids);
  const std::size_t d = embedding.n_dimensions();
  std::vector<Rdm> features;
  features.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    const Vector col = embedding.values.col(static_cast<Eigen::Index>(k));
    features.push_back(feature_rdm(std::span<const double>(col.data(), col.size()), embedding.stimulus_ids));
  }
  DimensionProfile profile;
  profile.dimension_names = embedding.dimension_names;
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<Rdm> controls;
    std::vector<std::string> names;
    for (std::size_t o = 0; o < d; ++o) {
      if (o == k) continue;
      controls.push_back(features[o]);
      names.push_back(embedding.dimension_names[o]);
    }
    const auto r = partial_spearman(model_rdm, features[k], controls, names);
    profile.partial_rho.push_back(r.rho);
    profile.r2.push_back(r.rho * r.rho);
    profile.ridge_lambda.push_back(r.ridge_lambda);
  }
  return profile;
}

std::vector<double> profile_difference(const DimensionProfile& aligned, const DimensionProfile& baseline) {
  if (aligned.dimension_names != baseline.dimension_names) {
    throw InvalidArgument("profile_difference: dimension names differ");
  }
  std::vector<double> out(aligned.r2.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = aligned.r2[k] - baseline.r2[k];
  return out;
}

}  // namespace neuroalign
