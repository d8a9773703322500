#pragma once

#include "lqmfg/integrate.hpp"
#include "lqmfg/model.hpp"

#include <cstdint>

namespace lqmfg {

enum class MatrixNorm { Spectral, Frobenius };

/// lhs = (1 + sqrt(T) * phi_norm_T * B_weighted) * (1 + NS); holds iff lhs < 2.
struct ConditionReport {
  double T = 0.0;
  double phi_norm_T = 0.0;
  double NS = 0.0;
  double B_weighted = 0.0;  // |B Q^-1/2|
  double lhs = 0.0;
  bool holds = false;
  MatrixNorm norm = MatrixNorm::Spectral;
};

/// Throws NotSPD unless the smallest eigenvalue exceeds 1e-12 times the largest.
Matrix spd_inv_sqrt(const Matrix& m);

/// Symmetric square root of a PSD matrix (tiny negative eigenvalues clipped).
Matrix psd_sqrt(const Matrix& m);

double matrix_norm(const Matrix& m, MatrixNorm norm = MatrixNorm::Spectral);

/// sup over grid nodes t of
///   sqrt(|phi(T,t)' Qbar^1/2|^2 + int_t^T |phi(s,t)' Q^1/2|^2 ds),
/// phi(s,t) = exp(A (s - t)), with the integral by the trapezoid rule on the
/// grid. `check_spd = false` admits a singular Q (diagnostics only).
double phi_norm(const Matrix& a, const Matrix& q, const Matrix& qbar, const TimeGrid& grid,
                MatrixNorm norm = MatrixNorm::Spectral, bool check_spd = true);

struct CouplingNorms {
  double NS = 0.0;          // max(|Qbar^-1/2 Sbar Qbar^-1/2|, |Q^-1/2 S Q^-1/2|)
  double B_weighted = 0.0;  // |B Q^-1/2|
};

/// A singular Qbar is accepted when Sbar vanishes on its kernel (the inverse
/// root is then taken on the range); otherwise NS = +inf.
CouplingNorms coupling_norms(const Matrix& q, const Matrix& s, const Matrix& qbar,
                             const Matrix& sbar, const Matrix& b,
                             MatrixNorm norm = MatrixNorm::Spectral);

ConditionReport sufficient_condition(const BlockSystem& blocks, const TimeGrid& grid,
                                     MatrixNorm norm = MatrixNorm::Spectral);
ConditionReport sufficient_condition(const LqModel& model, const SplitSpec& split,
                                     const TimeGrid& grid, MatrixNorm norm = MatrixNorm::Spectral);

/// <x, y> = x(T)' Qbar y(T) + int_0^T x' Q y dt, trapezoid rule.
double hinner(const VectorPath& x, const VectorPath& y, const Matrix& q, const Matrix& qbar);
double hnorm(const VectorPath& x, const Matrix& q, const Matrix& qbar);

/// Largest observed |Phi x|_H / |x|_H of the homogeneous Picard map over
/// smooth random probes and their power-iterated images.
double empirical_contraction(const BlockSystem& blocks, int n_probes, std::uint64_t seed,
                             const TimeGrid& grid);

/// Lipschitz constant of the Picard map implied by the bounds behind the
/// sufficient condition: the positive root a of
///   a^2 - (N + c) a - c N = 0,  c = sqrt(T) phi_norm_T B_weighted, N = NS.
/// It is below one exactly when the condition holds.
double contraction_bound(const ConditionReport& report);

}  // namespace lqmfg
