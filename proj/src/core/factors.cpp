#include "covplan/factors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "covplan/errors.hpp"

namespace covplan {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

namespace pose2 {

Eigen::Vector3d between(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const double c = std::cos(from.z());
  const double s = std::sin(from.z());
  const double dx = to.x() - from.x();
  const double dy = to.y() - from.y();
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(to.z() - from.z())};
}

Eigen::Vector3d compose(const Eigen::Vector3d& pose, const Eigen::Vector3d& delta) {
  const double c = std::cos(pose.z());
  const double s = std::sin(pose.z());
  return {pose.x() + c * delta.x() - s * delta.y(), pose.y() + s * delta.x() + c * delta.y(),
          wrap_angle(pose.z() + delta.z())};
}

Eigen::Vector2d range_bearing(const Eigen::Vector3d& pose, const Eigen::Vector2d& landmark) {
  const Eigen::Vector2d d = landmark - pose.head<2>();
  return {d.norm(), wrap_angle(std::atan2(d.y(), d.x()) - pose.z())};
}

Eigen::Vector2d landmark_from(const Eigen::Vector3d& pose, const Eigen::Vector2d& measurement) {
  const double a = pose.z() + measurement.y();
  return {pose.x() + measurement.x() * std::cos(a), pose.y() + measurement.x() * std::sin(a)};
}

}  // namespace pose2

GaussianFactor::GaussianFactor(FactorModelKind model, std::vector<VariableKey> keys, Vector z,
                               const Matrix& covariance)
    : model_(model), keys_(std::move(keys)), z_(std::move(z)), covariance_(covariance) {
  if (covariance.rows() != z_.size() || covariance.cols() != z_.size())
    throw DimensionError("noise covariance does not match measurement dimension");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw NotPositiveDefinite("noise covariance is not symmetric", 0, 0);
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("noise covariance is not positive definite", 0, 0);
  const Matrix lower = llt.matrixL();
  whitener_ = lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(z_.size(), z_.size()));
}

GaussianFactor GaussianFactor::prior(VariableKey key, Vector z, const Matrix& covariance) {
  if (z.size() != key.dim()) throw DimensionError("prior measurement has wrong dimension");
  return GaussianFactor(FactorModelKind::Prior, {key}, std::move(z), covariance);
}

GaussianFactor GaussianFactor::between(VariableKey from, VariableKey to, Vector z,
                                       const Matrix& covariance) {
  if (from.kind != to.kind) throw DimensionError("between factor needs two variables of one kind");
  if (z.size() != from.dim()) throw DimensionError("between measurement has wrong dimension");
  return GaussianFactor(FactorModelKind::Between, {from, to}, std::move(z), covariance);
}

GaussianFactor GaussianFactor::range_bearing(VariableKey pose, VariableKey landmark, Vector z,
                                             const Matrix& covariance) {
  if (pose.kind != VarKind::Pose || landmark.kind != VarKind::Landmark)
    throw DimensionError("range-bearing factor connects a pose and a landmark");
  if (z.size() != 2) throw DimensionError("range-bearing measurement has dimension 2");
  return GaussianFactor(FactorModelKind::RangeBearing, {pose, landmark}, std::move(z), covariance);
}

GaussianFactor GaussianFactor::linear(std::vector<VariableKey> keys, Matrix h, Vector z,
                                      const Matrix& covariance) {
  if (h.rows() != z.size() || h.cols() != StateLayout::total_dim(keys))
    throw DimensionError("linear factor model has inconsistent shape");
  GaussianFactor f(FactorModelKind::Linear, std::move(keys), std::move(z), covariance);
  f.linear_h_ = std::move(h);
  return f;
}

Index GaussianFactor::variable_dim() const { return StateLayout::total_dim(keys_); }

bool GaussianFactor::touches(VariableKey key) const {
  for (const auto& k : keys_)
    if (k == key) return true;
  return false;
}

bool GaussianFactor::angular(Index row) const {
  switch (model_) {
    case FactorModelKind::Prior:
    case FactorModelKind::Between:
      return keys_.front().kind == VarKind::Pose && row == 2;
    case FactorModelKind::RangeBearing:
      return row == 1;
    case FactorModelKind::Linear:
      return false;
  }
  return false;
}

void GaussianFactor::evaluate(std::span<const Vector> values, Vector& h, Matrix& jacobian) const {
  if (values.size() != keys_.size()) throw DimensionError("factor evaluated with wrong arity");
  for (std::size_t i = 0; i < keys_.size(); ++i)
    if (values[i].size() != keys_[i].dim())
      throw DimensionError("factor value has wrong dimension for " + to_string(keys_[i]));

  jacobian.setZero(dim(), variable_dim());
  switch (model_) {
    case FactorModelKind::Prior: {
      h = values[0];
      jacobian.setIdentity();
      break;
    }
    case FactorModelKind::Between: {
      if (keys_[0].kind != VarKind::Pose) {
        h = values[1] - values[0];
        const Index d = values[0].size();
        jacobian.leftCols(d) = -Matrix::Identity(d, d);
        jacobian.rightCols(d) = Matrix::Identity(d, d);
        break;
      }
      const Eigen::Vector3d a = values[0];
      const Eigen::Vector3d b = values[1];
      h = pose2::between(a, b);
      const double c = std::cos(a.z());
      const double s = std::sin(a.z());
      const double dx = b.x() - a.x();
      const double dy = b.y() - a.y();
      jacobian.block<3, 3>(0, 0) << -c, -s, -s * dx + c * dy,  //
          s, -c, -c * dx - s * dy,                               //
          0, 0, -1;
      jacobian.block<3, 3>(0, 3) << c, s, 0,  //
          -s, c, 0,                            //
          0, 0, 1;
      break;
    }
    case FactorModelKind::RangeBearing: {
      const Eigen::Vector3d p = values[0];
      const Eigen::Vector2d l = values[1];
      h = pose2::range_bearing(p, l);
      const double dx = l.x() - p.x();
      const double dy = l.y() - p.y();
      const double q = dx * dx + dy * dy;
      const double r = std::sqrt(q);
      if (r <= 0.0) throw DimensionError("range-bearing factor evaluated at zero range");
      jacobian.row(0) << -dx / r, -dy / r, 0, dx / r, dy / r;
      jacobian.row(1) << dy / q, -dx / q, -1, -dy / q, dx / q;
      break;
    }
    case FactorModelKind::Linear: {
      Vector stacked(variable_dim());
      Index off = 0;
      for (const auto& v : values) {
        stacked.segment(off, v.size()) = v;
        off += v.size();
      }
      h = linear_h_ * stacked;
      jacobian = linear_h_;
      break;
    }
  }
}

Vector GaussianFactor::predict(std::span<const Vector> values) const {
  Vector h;
  Matrix j;
  evaluate(values, h, j);
  return h;
}

Vector GaussianFactor::error(std::span<const Vector> values) const {
  Vector e = z_ - predict(values);
  for (Index r = 0; r < e.size(); ++r)
    if (angular(r)) e[r] = wrap_angle(e[r]);
  return e;
}

GaussianFactor::Linearized GaussianFactor::linearize(std::span<const Vector> values) const {
  Vector h;
  Matrix jac;
  evaluate(values, h, jac);
  Vector e = z_ - h;
  for (Index r = 0; r < e.size(); ++r)
    if (angular(r)) e[r] = wrap_angle(e[r]);
  return {whitener_ * jac, whitener_ * e};
}

bool operator==(const GaussianFactor& a, const GaussianFactor& b) {
  return a.model_ == b.model_ && a.keys_ == b.keys_ && a.z_ == b.z_ &&
         a.covariance_ == b.covariance_ && a.linear_h_ == b.linear_h_;
}

Matrix NoiseWeightedJacobian::columns(std::span<const VariableKey> keys) const {
  StateLayout local(involved);
  Matrix out(block.rows(), StateLayout::total_dim(keys));
  Index col = 0;
  for (const auto& k : keys) {
    if (local.contains(k))
      out.middleCols(col, k.dim()) = block.middleCols(local.offset(k), k.dim());
    else
      out.middleCols(col, k.dim()).setZero();
    col += k.dim();
  }
  return out;
}

Matrix NoiseWeightedJacobian::dense(const StateLayout& layout) const {
  Matrix out = Matrix::Zero(block.rows(), layout.dim());
  Index col = 0;
  for (const auto& k : involved) {
    out.middleCols(layout.offset(k), k.dim()) = block.middleCols(col, k.dim());
    col += k.dim();
  }
  return out;
}

std::vector<VariableKey> involved_keys(std::span<const GaussianFactor> factors) {
  std::vector<VariableKey> out;
  for (const auto& f : factors) out = key_union(out, f.keys());
  return out;
}

std::vector<Vector> gather_values(std::span<const VariableKey> keys, const Vector& point,
                                  const StateLayout& layout) {
  std::vector<Vector> values;
  values.reserve(keys.size());
  for (const auto& k : keys) values.emplace_back(point.segment(layout.offset(k), k.dim()));
  return values;
}

LinearizedBatch linearize_factors(std::span<const GaussianFactor> factors, const Vector& point,
                                  const StateLayout& layout) {
  if (point.size() != layout.dim())
    throw DimensionError("linearization point does not match layout dimension");
  LinearizedBatch out;
  out.jacobian.involved = involved_keys(factors);
  StateLayout local(out.jacobian.involved);
  Index rows = 0;
  for (const auto& f : factors) rows += f.dim();
  out.jacobian.block = Matrix::Zero(rows, local.dim());
  out.residual.resize(rows);

  Index row = 0;
  for (const auto& f : factors) {
    const auto values = gather_values(f.keys(), point, layout);
    const auto lin = f.linearize(values);
    Index col = 0;
    for (const auto& k : f.keys()) {
      out.jacobian.block.block(row, local.offset(k), f.dim(), k.dim()) +=
          lin.jacobian.middleCols(col, k.dim());
      col += k.dim();
    }
    out.residual.segment(row, f.dim()) = lin.residual;
    row += f.dim();
  }
  return out;
}

Vector retract(const Vector& x, const Vector& delta, const StateLayout& layout) {
  Vector out = x + delta;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout.keys()[i].kind == VarKind::Pose) {
      const Index th = layout.offset_at(i) + 2;
      out[th] = wrap_angle(out[th]);
    }
  }
  return out;
}

Vector local_difference(const Vector& a, const Vector& b, const StateLayout& layout) {
  Vector out = a - b;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout.keys()[i].kind == VarKind::Pose) {
      const Index th = layout.offset_at(i) + 2;
      out[th] = wrap_angle(out[th]);
    }
  }
  return out;
}

}  // namespace covplan
