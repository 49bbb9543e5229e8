#include "covplan/belief.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "covplan/errors.hpp"

namespace covplan {

namespace {

using Triplet = Eigen::Triplet<double, int>;

void add_block(std::vector<Triplet>& t, Index r0, Index c0, const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0)
        t.emplace_back(static_cast<int>(r0 + i), static_cast<int>(c0 + j), m(i, j));
}

std::shared_ptr<const SparseCholesky> factorize_for(const SparseMatrix& lambda,
                                                    const StateLayout& layout) {
  try {
    return factorize(lambda);
  } catch (const NotPositiveDefinite& e) {
    const VariableKey key = layout.key_at_scalar(e.original_index());
    throw UnderConstrained("information matrix is singular at variable " + to_string(key),
                           {key});
  }
}

}  // namespace

void FactorGraph::add_factor(GaussianFactor factor) {
  for (const auto& k : factor.keys())
    if (!layout_.contains(k))
      throw DimensionError("factor references unknown variable " + to_string(k));
  factors_.push_back(std::move(factor));
}

void assemble_information(std::span<const GaussianFactor> factors, const Vector& point,
                          const StateLayout& layout, SparseMatrix& lambda, Vector& gradient) {
  if (point.size() != layout.dim())
    throw DimensionError("linearization point does not match layout dimension");
  std::vector<Triplet> t;
  gradient = Vector::Zero(layout.dim());
  for (const auto& f : factors) {
    const auto values = gather_values(f.keys(), point, layout);
    const auto lin = f.linearize(values);
    const Matrix jtj = lin.jacobian.transpose() * lin.jacobian;
    const Vector jtb = lin.jacobian.transpose() * lin.residual;
    Index ci = 0;
    for (const auto& ki : f.keys()) {
      const Index oi = layout.offset(ki);
      gradient.segment(oi, ki.dim()) += jtb.segment(ci, ki.dim());
      Index cj = 0;
      for (const auto& kj : f.keys()) {
        add_block(t, oi, layout.offset(kj), jtj.block(ci, cj, ki.dim(), kj.dim()));
        cj += kj.dim();
      }
      ci += ki.dim();
    }
  }
  lambda.resize(layout.dim(), layout.dim());
  lambda.setFromTriplets(t.begin(), t.end());
  lambda.makeCompressed();
}

std::shared_ptr<const SparseCholesky> factorize(const SparseMatrix& lambda) {
  return std::make_shared<const SparseCholesky>(lambda);
}

std::shared_ptr<const SparseCholesky> factorize(const SparseMatrix& lambda,
                                                std::vector<int> ordering) {
  return std::make_shared<const SparseCholesky>(lambda, std::move(ordering));
}

MapSolution solve_map(const FactorGraph& graph, const Vector& initial, const SolveConfig& config,
                      const BeliefState* previous) {
  const StateLayout& layout = graph.layout();
  if (initial.size() != layout.dim())
    throw DimensionError("initial estimate does not match layout dimension");

  MapSolution out;
  RelinearizationReport& report = out.report;
  Vector x = initial;
  SparseMatrix lambda;
  Vector gradient;
  for (int it = 0; it < config.max_iters; ++it) {
    assemble_information(graph.factors(), x, layout, lambda, gradient);
    const auto chol = factorize_for(lambda, layout);
    const Vector delta = chol->solve(gradient);
    x = retract(x, delta, layout);
    report.last_step_norm = delta.norm();
    if (!std::isfinite(report.last_step_norm))
      throw UnderConstrained("Gauss-Newton step is not finite", {});
    if (report.last_step_norm < config.step_tol) {
      report.converged = true;
      break;
    }
    ++report.iterations;
  }

  // Linearization point: old variables keep their previous point unless the
  // estimate moved beyond the threshold; new variables take the estimate.
  Vector theta = x;
  std::unordered_set<VariableKey, VariableKeyHash> moved;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const VariableKey key = layout.keys()[i];
    const Index off = layout.offset_at(i);
    Vector ref;
    if (previous == nullptr)
      ref = initial.segment(off, key.dim());
    else if (previous->layout.contains(key))
      ref = previous->linearization_point.segment(previous->layout.offset(key), key.dim());
    else
      continue;
    Vector diff = x.segment(off, key.dim()) - ref;
    if (key.kind == VarKind::Pose) diff[2] = wrap_angle(diff[2]);
    if (diff.norm() > config.relin_threshold) {
      moved.insert(key);
      report.relinearized.push_back(key);
    } else {
      theta.segment(off, key.dim()) = ref;
    }
  }
  const std::size_t old_factors = previous == nullptr ? graph.size() : previous->factor_count;
  if (old_factors > graph.size())
    throw DimensionError("previous belief has more factors than the graph");
  for (std::size_t j = 0; j < old_factors; ++j) {
    for (const auto& k : graph.factors()[j].keys()) {
      if (moved.count(k)) {
        report.relinearized_factors.push_back(j);
        break;
      }
    }
  }

  BeliefState& b = out.belief;
  b.layout = layout;
  b.mean = x;
  b.linearization_point = theta;
  assemble_information(graph.factors(), theta, layout, b.information, gradient);
  b.sqrt_information = factorize_for(b.information, layout);
  b.information_vector = b.information * x;
  b.factor_count = graph.size();
  return out;
}

BeliefState make_belief(StateLayout layout, SparseMatrix lambda, Vector mean) {
  if (lambda.rows() != layout.dim() || lambda.cols() != layout.dim() || mean.size() != layout.dim())
    throw DimensionError("belief components do not match layout dimension");
  BeliefState b;
  b.layout = std::move(layout);
  b.mean = std::move(mean);
  b.linearization_point = b.mean;
  b.information = std::move(lambda);
  b.information.makeCompressed();
  b.sqrt_information = factorize_for(b.information, b.layout);
  b.information_vector = b.information * b.mean;
  return b;
}

BeliefState apply_information_update(const BeliefState& belief, const InferenceChange& change) {
  change.validate();
  if (change.empty()) return belief;
  for (const auto& k : change.involved)
    if (!belief.layout.contains(k))
      throw DimensionError("change involves unknown variable " + to_string(k));

  BeliefState out;
  out.layout = belief.layout;
  out.layout.append(change.new_keys);
  const Index n_new = out.layout.dim();
  const Index n_old = belief.layout.dim();

  const std::vector<Index> idx_i = out.layout.scalar_indices(change.involved);
  const std::vector<Index> idx_n = out.layout.scalar_indices(change.new_keys);
  std::vector<Index> idx = idx_i;
  idx.insert(idx.end(), idx_n.begin(), idx_n.end());

  Matrix a(change.rows(), change.involved_dim() + change.new_dim());
  a << change.a_involved, change.a_new;
  Matrix update = a.transpose() * a;
  if (change.kind == ChangeKind::Relinearization)
    update -= change.a_minus.transpose() * change.a_minus;

  std::vector<Triplet> t;
  for (Index j = 0; j < belief.information.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(belief.information, j); it; ++it)
      t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (Index j = 0; j < update.cols(); ++j)
    for (Index i = 0; i < update.rows(); ++i)
      if (update(i, j) != 0.0)
        t.emplace_back(static_cast<int>(idx[i]), static_cast<int>(idx[j]), update(i, j));
  out.information.resize(n_new, n_new);
  out.information.setFromTriplets(t.begin(), t.end());
  out.information.prune(0.0);
  out.information.makeCompressed();

  try {
    out.sqrt_information = factorize(out.information);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(std::string("updated information matrix is not positive definite: ") +
                                  e.what(),
                              e.pivot(), e.original_index());
  }

  Vector mean = Vector::Zero(n_new);
  mean.head(n_old) = belief.mean;
  if (change.measurement) {
    Vector eta = Vector::Zero(n_new);
    eta.head(n_old) = belief.information_vector;
    const Vector contrib = a.transpose() * *change.measurement;
    for (std::size_t i = 0; i < idx.size(); ++i) eta[idx[i]] += contrib[static_cast<Index>(i)];
    out.information_vector = eta;
    out.mean = out.sqrt_information->solve(eta);
  } else {
    out.mean = mean;
    out.information_vector = out.information * mean;
  }
  out.linearization_point = Vector::Zero(n_new);
  out.linearization_point.head(n_old) = belief.linearization_point;
  out.linearization_point.tail(n_new - n_old) = out.mean.tail(n_new - n_old);
  out.factor_count = belief.factor_count;
  return out;
}

}  // namespace covplan
