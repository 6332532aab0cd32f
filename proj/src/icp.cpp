#include "brachy/registration/icp.hpp"

#include <cmath>

namespace brachy {

void IcpParams::validate() const {
  if (!(epsilon > 0)) throw InputError("ICP epsilon must be positive");
  if (max_iterations < 1) throw InputError("ICP max_iterations must be >= 1");
  if (!(min_relative_improvement >= 0 && min_relative_improvement < 1)) {
    throw InputError("ICP min_relative_improvement must be in [0, 1)");
  }
}

std::string_view to_string(IcpTermination t) {
  switch (t) {
    case IcpTermination::EpsilonReached:
      return "epsilon-reached";
    case IcpTermination::Stalled:
      return "stalled";
    case IcpTermination::MaxIterations:
      return "max-iterations";
  }
  return "?";
}

IcpTermination parse_icp_termination(std::string_view s) {
  if (s == "epsilon-reached") return IcpTermination::EpsilonReached;
  if (s == "stalled") return IcpTermination::Stalled;
  if (s == "max-iterations") return IcpTermination::MaxIterations;
  throw InputError("unknown ICP termination '" + std::string(s) + "'");
}

namespace {

// `hints` carries the previous matches and is updated in place.
PointCloud closest_points(const PointCloud& pts, const NNIndex& fixed, std::vector<Eigen::Index>& hints) {
  PointCloud q(3, pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    auto& h = hints[std::size_t(i)];
    h = fixed.nearest(pts.col(i), h).index;
    q.col(i) = fixed.points().col(h);
  }
  return q;
}

bool all_identical(const PointCloud& q) {
  for (Eigen::Index i = 1; i < q.cols(); ++i) {
    if (q.col(i) != q.col(0)) return false;
  }
  return true;
}

}  // namespace

IcpResult icp(const PointCloud& moving, const NNIndex& fixed, const RigidTransformd& init, const IcpParams& params) {
  params.validate();
  if (moving.cols() == 0) throw InputError("ICP moving cloud is empty");

  IcpResult result;
  RigidTransformd total = init;
  PointCloud current = transform_points(init, moving);
  std::vector<Eigen::Index> hints(std::size_t(moving.cols()), -1);

  for (int it = 0; it < params.max_iterations; ++it) {
    const PointCloud matches = closest_points(current, fixed, hints);
    if (matches.cols() > 1 && all_identical(matches)) {
      throw DegenerateConfiguration("closest-point set collapsed to a single fixed point");
    }
    const RigidTransformd step = absolute_orientation(current, matches);
    PointCloud next = transform_points(step, current);
    const double mse = (next - matches).colwise().squaredNorm().mean();

    if (!result.mse_trace.empty() && mse > result.mse_trace.back()) {
      // Exact arithmetic never increases the MSE; a rise is rounding at
      // the fixed point, so keep the previous estimate.
      result.termination = IcpTermination::Stalled;
      break;
    }
    total = compose(step, total);
    current = std::move(next);
    const double prev = result.mse_trace.empty() ? -1.0 : result.mse_trace.back();
    result.mse_trace.push_back(mse);
    result.iterations = int(result.mse_trace.size());

    if (mse < params.epsilon) {
      result.termination = IcpTermination::EpsilonReached;
      break;
    }
    if (prev > 0 && (prev - mse) / prev < params.min_relative_improvement) {
      result.termination = IcpTermination::Stalled;
      break;
    }
    result.termination = IcpTermination::MaxIterations;
  }
  result.transform = total;
  return result;
}

double residual_mse(const RigidTransformd& t, const PointCloud& moving, const NNIndex& fixed) {
  if (moving.cols() == 0) throw InputError("residual of an empty cloud");
  const PointCloud mapped = transform_points(t, moving);
  double sum = 0;
  for (Eigen::Index i = 0; i < mapped.cols(); ++i) sum += fixed.nearest(mapped.col(i)).squared_distance;
  return sum / double(mapped.cols());
}

}  // namespace brachy
