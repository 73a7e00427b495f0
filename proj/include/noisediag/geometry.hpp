#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "noisediag/dataset.hpp"
#include "noisediag/error.hpp"
#include "noisediag/numeric.hpp"
#include "noisediag/parallel.hpp"
#include "noisediag/tensor.hpp"

namespace noisediag {

/// d = z_g - z, elementwise.
inline LatentTensor displacement(const SampleRecord& rec) {
  require_same_shape(rec.z, rec.z_g, "displacement");
  std::vector<double> d(rec.z.size());
  const auto z = rec.z.values(), zg = rec.z_g.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = zg[i] - z[i];
  return LatentTensor(rec.z.shape(), std::move(d));
}

struct GeometryRecordMetrics {
  double rel_disp = 0.0;  // |d| / |z|
  double cos_sim = 0.0;   // cos(z, z_g)
  double d_norm = 0.0;    // |d|
};

inline GeometryRecordMetrics geometry_metrics(const SampleRecord& rec) {
  require_same_shape(rec.z, rec.z_g, "geometry_metrics");
  const auto z = rec.z.values(), zg = rec.z_g.values();
  const double z_norm = norm2(z);
  const double zg_norm = norm2(zg);
  const std::string who = "record (" + rec.prompt_id + ", " + rec.seed_id + ")";
  if (!(z_norm > 0.0)) throw degenerate_input_error(who + ": |z| = 0");
  if (!(zg_norm > 0.0)) throw degenerate_input_error(who + ": |z_g| = 0");
  const double d_norm = std::sqrt(pairwise_reduce(z.size(), [&](std::size_t i) {
    const double d = zg[i] - z[i];
    return d * d;
  }));
  // one square root, so z_g == z gives exactly 1
  const double cos = std::clamp(dot(z, zg) / std::sqrt(squared_norm(z) * squared_norm(zg)), -1.0, 1.0);
  return {d_norm / z_norm, cos, d_norm};
}

/// Flattened displacements of one prompt group, one row per seed.
class DisplacementSet {
public:
  explicit DisplacementSet(const PromptGroup& group) : prompt_id_(group.prompt_id) {
    for (const auto& rec : group.records) {
      seed_ids_.push_back(rec.seed_id);
      auto d = displacement(rec);
      rows_.emplace_back(d.values().begin(), d.values().end());
    }
  }

  DisplacementSet(std::string prompt_id, std::vector<std::string> seed_ids, std::vector<std::vector<double>> rows)
      : prompt_id_(std::move(prompt_id)), seed_ids_(std::move(seed_ids)), rows_(std::move(rows)) {
    if (seed_ids_.size() != rows_.size()) throw internal_error("seed id / displacement count mismatch");
    for (const auto& r : rows_)
      if (r.size() != rows_.front().size()) throw shape_error("displacements of prompt " + prompt_id_ + " differ in length");
  }

  const std::string& prompt_id() const noexcept { return prompt_id_; }
  std::size_t n_seeds() const noexcept { return rows_.size(); }
  std::size_t dimension() const noexcept { return rows_.empty() ? 0 : rows_.front().size(); }
  std::span<const double> row(std::size_t s) const noexcept { return rows_[s]; }
  const std::string& seed_id(std::size_t s) const noexcept { return seed_ids_[s]; }

  void require_seeds(std::size_t min, const char* metric) const {
    if (n_seeds() < min)
      throw insufficient_data_error(std::string(metric) + " for prompt " + prompt_id_ + " needs at least " +
                                    std::to_string(min) + " seeds, got " + std::to_string(n_seeds()));
  }

private:
  std::string prompt_id_;
  std::vector<std::string> seed_ids_;
  std::vector<std::vector<double>> rows_;
};

/// Mean pairwise cosine of unit displacements, pairs i < j in seed order.
inline double dir_stab(const DisplacementSet& set) {
  set.require_seeds(2, "DirStab");
  const std::size_t s = set.n_seeds();
  std::vector<double> norms(s);
  for (std::size_t i = 0; i < s; ++i) {
    norms[i] = norm2(set.row(i));
    if (!(norms[i] > 0.0))
      throw degenerate_input_error("DirStab: zero displacement for prompt " + set.prompt_id() + ", seed " +
                                   set.seed_id(i));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) sum += dot(set.row(i), set.row(j)) / (norms[i] * norms[j]);
  const double value = 2.0 * sum / static_cast<double>(s * (s - 1));
  // Gram bound: |sum_i u_i|^2 >= 0 gives mean pairwise cosine >= -1/(S-1)
  const double lower = -1.0 / static_cast<double>(s - 1);
  if (value < lower - 1e-9 || value > 1.0 + 1e-9) throw internal_error("DirStab outside its Gram bounds");
  return std::clamp(value, lower, 1.0);
}

/// Population std (divisor S) of displacement norms over their mean.
inline double cv_dnorm(const DisplacementSet& set) {
  set.require_seeds(2, "CV of |d|");
  std::vector<double> norms(set.n_seeds());
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = norm2(set.row(i));
  const double m = mean(norms);
  if (!(m > 0.0)) throw degenerate_input_error("CV of |d|: all displacements are zero for prompt " + set.prompt_id());
  return population_stddev(norms) / m;
}

/// Relative size below which eigenvalues count as numerical dust.
inline constexpr double evr1_eigen_floor = 1e-12;
/// A centered set whose top eigenvalue is below this fraction of the summed
/// squared displacement norms is treated as rank 0.
inline constexpr double evr1_rank_zero_floor = 1e-24;

/// S x S Gram matrix of the displacements after subtracting their
/// across-seed mean.
inline Eigen::MatrixXd centered_gram(const DisplacementSet& set) {
  const std::size_t s = set.n_seeds(), dim = set.dimension();
  std::vector<double> centroid(dim);
  for (std::size_t k = 0; k < dim; ++k)
    centroid[k] = pairwise_reduce(s, [&](std::size_t i) { return set.row(i)[k]; }) / static_cast<double>(s);
  std::vector<std::vector<double>> centered(s, std::vector<double>(dim));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t k = 0; k < dim; ++k) centered[i][k] = set.row(i)[k] - centroid[k];
  Eigen::MatrixXd gram(s, s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i; j < s; ++j) {
      const double v = dot(centered[i], centered[j]);
      gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  return gram;
}

/// Top explained-variance ratio of PCA over the seed displacements.
inline double evr1(const DisplacementSet& set) {
  set.require_seeds(2, "EVR1");
  const Eigen::MatrixXd gram = centered_gram(set);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw internal_error("EVR1: eigensolver did not converge");
  const Eigen::VectorXd eig = solver.eigenvalues();  // ascending
  const double top = eig(eig.size() - 1);

  double energy = 0.0;
  for (std::size_t i = 0; i < set.n_seeds(); ++i) energy += squared_norm(set.row(i));
  if (!(top > evr1_rank_zero_floor * energy))
    throw degenerate_input_error("EVR1: displacements of prompt " + set.prompt_id() +
                                 " are identical (rank 0 after centering)");

  double total = 0.0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (eig(i) > evr1_eigen_floor * top) {
      total += eig(i);
      ++rank;
    }
  }
  const double value = top / total;
  if (value < 1.0 / static_cast<double>(rank) - 1e-12 || value > 1.0 + 1e-12)
    throw internal_error("EVR1 outside [1/rank, 1]");
  return std::min(value, 1.0);
}

inline double dir_stab(const PromptGroup& group) { return dir_stab(DisplacementSet(group)); }
inline double cv_dnorm(const PromptGroup& group) { return cv_dnorm(DisplacementSet(group)); }
inline double evr1(const PromptGroup& group) { return evr1(DisplacementSet(group)); }

struct PromptDirectionMetrics {
  std::string prompt_id;
  double dir_stab = 0.0;
  double cv_dnorm = 0.0;
  double evr1 = 0.0;
  std::size_t n_seeds = 0;
};

struct RecordGeometry {
  std::string prompt_id;
  std::string seed_id;
  GeometryRecordMetrics metrics;
};

/// Everything the geometry report needs from one prompt group.
struct PromptGeometry {
  PromptDirectionMetrics direction;
  std::vector<RecordGeometry> records;
};

inline PromptGeometry prompt_geometry(const PromptGroup& group) {
  PromptGeometry out;
  for (const auto& rec : group.records) out.records.push_back({rec.prompt_id, rec.seed_id, geometry_metrics(rec)});
  const DisplacementSet set(group);
  out.direction = {group.prompt_id, dir_stab(set), cv_dnorm(set), evr1(set), set.n_seeds()};
  return out;
}

struct MeanMedian {
  double mean = 0.0;
  double median = 0.0;
};

/// Cross-prompt summary in the shape of the global-geometry table.
struct GeometrySummary {
  std::size_t n_prompts = 0;
  std::size_t n_records = 0;
  // over all records
  MeanMedian rel_disp;
  MeanMedian cos_sim;
  // seed-averaged per prompt first, then averaged over prompts
  double rel_disp_prompt_mean = 0.0;
  double cos_sim_prompt_mean = 0.0;
  MeanMedian dir_stab;
  MeanMedian cv_dnorm;
  MeanMedian evr1;
};

inline GeometrySummary aggregate_geometry(std::span<const PromptGeometry> prompts) {
  if (prompts.empty()) throw insufficient_data_error("geometry summary needs at least one prompt group");
  std::vector<double> rel, cos, rel_p, cos_p, ds, cv, ev;
  for (const auto& p : prompts) {
    std::vector<double> pr, pc;
    for (const auto& r : p.records) {
      rel.push_back(r.metrics.rel_disp);
      cos.push_back(r.metrics.cos_sim);
      pr.push_back(r.metrics.rel_disp);
      pc.push_back(r.metrics.cos_sim);
    }
    rel_p.push_back(mean(pr));
    cos_p.push_back(mean(pc));
    ds.push_back(p.direction.dir_stab);
    cv.push_back(p.direction.cv_dnorm);
    ev.push_back(p.direction.evr1);
  }
  GeometrySummary out;
  out.n_prompts = prompts.size();
  out.n_records = rel.size();
  out.rel_disp = {mean(rel), median(rel)};
  out.cos_sim = {mean(cos), median(cos)};
  out.rel_disp_prompt_mean = mean(rel_p);
  out.cos_sim_prompt_mean = mean(cos_p);
  out.dir_stab = {mean(ds), median(ds)};
  out.cv_dnorm = {mean(cv), median(cv)};
  out.evr1 = {mean(ev), median(ev)};
  return out;
}

inline std::vector<PromptGeometry> geometry_report(std::span<const PromptGroup> groups, std::size_t jobs = 1) {
  std::vector<PromptGeometry> out(groups.size());
  parallel_for(groups.size(), jobs, [&](std::size_t i) { out[i] = prompt_geometry(groups[i]); });
  return out;
}

} // namespace noisediag
