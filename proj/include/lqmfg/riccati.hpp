#pragma once

#include "lqmfg/integrate.hpp"
#include "lqmfg/model.hpp"

#include <vector>

namespace lqmfg {

/// Drift used for the offset ODE  -dg/dt = (A' - Gamma M) g + k.
/// `ControlGain` (M = C) is what substituting p = Gamma x + g into the
/// backward equation yields. `PrintedCoupling` (M = B) is kept only so the
/// two can be compared.
enum class OffsetDrift { ControlGain, PrintedCoupling };

struct RiccatiOptions {
  IntegratorOptions integrator{};
  OffsetDrift offset_drift = OffsetDrift::ControlGain;
};

/// Agent value-function Hessian:  P' + P A1 + A1' P - P C1 R1^-1 C1' P + Q1 = 0,
/// P(T) = Qbar1. Symmetrized at every node.
struct AgentRiccatiPath {
  MatrixPath P;
};

/// Non-symmetric Riccati solution decoupling p = Gamma x + g:
///   Gamma' + A' Gamma + Gamma (A + B) - Gamma C Gamma + (Q + S) = 0,
///   Gamma(T) = Qbar + Sbar.
struct GammaPath {
  MatrixPath gamma;
};

/// -g' = (A' - Gamma C) g + k,  g(T) = kbar.
struct OffsetPath {
  VectorPath g;
};

AgentRiccatiPath solve_agent_riccati(const LqModel& model, const TimeGrid& grid,
                                     const RiccatiOptions& options = {});

/// Throws NoGlobalSolution if Gamma blows up before reaching t = 0.
GammaPath solve_gamma(const BlockSystem& blocks, const TimeGrid& grid,
                      const RiccatiOptions& options = {});

/// Needs Gamma between nodes; it is reconstructed by cubic Hermite
/// interpolation from the Riccati right-hand side, which keeps the offset
/// fourth-order accurate.
OffsetPath solve_offset(const BlockSystem& blocks, const GammaPath& gamma,
                        const RiccatiOptions& options = {});

/// dGamma/dt as a function of Gamma.
Matrix gamma_rate(const BlockSystem& blocks, const Matrix& gamma);
Vector offset_rate(const BlockSystem& blocks, const Matrix& gamma, const Vector& g,
                   OffsetDrift drift = OffsetDrift::ControlGain);
Matrix agent_riccati_rate(const LqModel& model, const Matrix& p);

/// Pointwise residuals, one value per node (max-abs entry). On each grid
/// interval the difference quotient is compared with Simpson's average of the
/// right-hand side (midpoint value by cubic Hermite interpolation); a node
/// reports the larger of its two adjacent interval defects. The defect of a
/// smooth exact solution is O(dt^4), while a jump of size e at one node shows
/// up as e / dt.
std::vector<double> riccati_residual(const GammaPath& path, const BlockSystem& blocks);
std::vector<double> riccati_residual(const AgentRiccatiPath& path, const LqModel& model);

/// Residual of the offset ODE in its ControlGain form, whichever drift was
/// used to produce `offset`.
std::vector<double> offset_residual(const OffsetPath& offset, const GammaPath& gamma,
                                    const BlockSystem& blocks);

/// Backward-drift defect of p = Gamma x + g along a state path x:
///   d(Gamma x + g)/dt + A'(Gamma x + g) + (Q + S) x + k
/// with dx/dt replaced by its drift. The x-coefficient is the Riccati
/// residual and the constant part the offset residual; one value per node.
std::vector<double> ansatz_residual(const GammaPath& gamma, const OffsetPath& offset,
                                    const BlockSystem& blocks, const VectorPath& state);

double max_of(const std::vector<double>& values);

}  // namespace lqmfg
