#pragma once

#include <string_view>
#include <vector>

#include "brachy/registration/absolute_orientation.hpp"
#include "brachy/registration/nn_index.hpp"

namespace brachy {

struct IcpParams {
  double epsilon = 1e-4;                    // mm², stop once MSE falls below
  int max_iterations = 100;
  double min_relative_improvement = 1e-6;   // stop when (prev - mse) / prev is smaller

  void validate() const;
};

enum class IcpTermination { EpsilonReached, Stalled, MaxIterations };
std::string_view to_string(IcpTermination t);
IcpTermination parse_icp_termination(std::string_view s);

struct IcpResult {
  RigidTransformd transform;    // maps the moving cloud into the fixed cloud's frame
  std::vector<double> mse_trace;
  int iterations = 0;
  IcpTermination termination = IcpTermination::MaxIterations;
};

/// Closest-point iteration: match every moving point to its nearest fixed
/// point, solve the absolute orientation onto those matches, apply it, and
/// measure the MSE against the matches. The returned transform is the
/// accumulated correction composed with `init`.
IcpResult icp(const PointCloud& moving, const NNIndex& fixed, const RigidTransformd& init, const IcpParams& params);

/// Mean over moving points of the squared distance from t(u) to its
/// nearest fixed point.
double residual_mse(const RigidTransformd& t, const PointCloud& moving, const NNIndex& fixed);

}  // namespace brachy
