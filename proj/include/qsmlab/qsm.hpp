#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "discretization.hpp"

namespace qsmlab {

struct QuasiStationaryMeasure {
  std::vector<double> eta;
  double rho = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;

  CellSet support(double threshold = 1e-12) const {
    CellSet s;
    for (int i = 0; i < static_cast<int>(eta.size()); ++i)
      if (eta[i] > threshold) s.push_back(i);
    return s;
  }
};

struct QsmOptions {
  double tol = 1e-12;
  int maxIter = 100000;
  std::vector<double> init;  // uniform when empty
};

inline double eigen_defect(const SparseMatrix& P, const std::vector<double>& eta, double rho) {
  auto y = P.left_multiply(eta);
  double r = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) r = std::max(r, std::abs(rho * eta[i] - y[i]));
  return r;
}

// Normalised left power iteration eta <- eta P / |eta P|_1.
inline QuasiStationaryMeasure power_qsm(const SparseMatrix& P, const QsmOptions& opt = {}) {
  const int n = P.rows;
  if (n == 0) throw std::invalid_argument("empty operator");
  QuasiStationaryMeasure q;
  std::vector<double> eta = opt.init.empty() ? std::vector<double>(n, 1.0 / n) : opt.init;
  if (static_cast<int>(eta.size()) != n) throw std::invalid_argument("init has the wrong length");
  double s0 = std::accumulate(eta.begin(), eta.end(), 0.0);
  if (!(s0 > 0.0)) throw std::invalid_argument("init has no mass");
  for (double& v : eta) v /= s0;
  double rho = 0.0;
  for (int it = 1; it <= opt.maxIter; ++it) {
    auto y = P.left_multiply(eta);
    double s = std::accumulate(y.begin(), y.end(), 0.0);
    if (!(s > 0.0)) throw std::domain_error("no quasi-stationary measure reachable from init");
    double diff = 0.0;
    for (int i = 0; i < n; ++i) {
      y[i] /= s;
      diff += std::abs(y[i] - eta[i]);
    }
    const double drho = std::abs(s - rho);
    eta.swap(y);
    rho = s;
    q.iterations = it;
    if (diff < opt.tol && drho < opt.tol) {
      q.converged = true;
      break;
    }
  }
  q.eta = std::move(eta);
  q.rho = rho;
  q.residual = eigen_defect(P, q.eta, q.rho);
  if (!q.converged) q.message = "maximum iterations reached; last iterate returned";
  return q;
}

// Dense oracle: Perron pair of the left eigenproblem, uniform projection on ties.
inline QuasiStationaryMeasure dense_qsm(const SparseMatrix& P, int bound = 512) {
  const int n = P.rows;
  if (n > bound) throw std::invalid_argument("operator larger than the dense oracle bound");
  Eigen::MatrixXd Pt = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int p = P.rowPtr[i]; p < P.rowPtr[i + 1]; ++p) Pt(P.colIdx[p], i) = P.values[p];
  Eigen::EigenSolver<Eigen::MatrixXd> es(Pt);
  if (es.info() != Eigen::Success) throw std::runtime_error("dense oracle: eigen decomposition failed");
  const auto& lam = es.eigenvalues();
  const auto& vec = es.eigenvectors();
  std::vector<int> real;
  for (int k = 0; k < n; ++k)
    if (std::abs(lam[k].imag()) <= 1e-10 * std::max(1.0, std::abs(lam[k]))) real.push_back(k);
  std::sort(real.begin(), real.end(), [&](int a, int b) { return lam[a].real() > lam[b].real(); });
  const double clusterTol = 1e-9;
  for (std::size_t a = 0; a < real.size();) {
    const double value = lam[real[a]].real();
    if (value <= 0.0) break;
    std::size_t b = a;
    while (b < real.size() && std::abs(lam[real[b]].real() - value) <= clusterTol) ++b;
    Eigen::MatrixXd basis(n, static_cast<Eigen::Index>(b - a));
    for (std::size_t c = a; c < b; ++c) basis.col(static_cast<Eigen::Index>(c - a)) = vec.col(real[c]).real();
    Eigen::VectorXd v;
    if (b - a == 1) {
      v = basis.col(0);
    } else {
      Eigen::VectorXd u = Eigen::VectorXd::Constant(n, 1.0 / n);
      v = basis * basis.colPivHouseholderQr().solve(u);
    }
    if (v.sum() < 0.0) v = -v;
    const double scale = v.cwiseAbs().maxCoeff();
    if (scale > 0.0 && v.minCoeff() >= -1e-9 * scale) {
      QuasiStationaryMeasure q;
      q.eta.resize(n);
      for (int i = 0; i < n; ++i) q.eta[i] = std::max(0.0, v[i]);
      double s = std::accumulate(q.eta.begin(), q.eta.end(), 0.0);
      for (double& e : q.eta) e /= s;
      q.rho = value;
      q.residual = eigen_defect(P, q.eta, q.rho);
      q.converged = true;
      return q;
    }
    a = b;
  }
  throw std::runtime_error("dense oracle: no nonnegative leading eigenvector");
}

struct ResidualReport {
  double fixedPoint = 0.0;         // |rho eta - eta P|_inf
  std::vector<double> kStep;       // kStep[k-1] = |rho^k eta - eta P^k|_inf
  double rowSumDefect = 0.0;       // |rho - sum_i eta_i rowSum_i|
};

inline ResidualReport check_qsm(const SparseMatrix& P, const QuasiStationaryMeasure& q, int kCheck = 5) {
  if (static_cast<int>(q.eta.size()) != P.rows) throw std::invalid_argument("dimension mismatch");
  ResidualReport r;
  std::vector<double> v = q.eta;
  double rk = 1.0;
  for (int k = 1; k <= kCheck; ++k) {
    v = P.left_multiply(v);
    rk *= q.rho;
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, std::abs(rk * q.eta[i] - v[i]));
    r.kStep.push_back(d);
  }
  r.fixedPoint = r.kStep.empty() ? eigen_defect(P, q.eta, q.rho) : r.kStep[0];
  double s = 0.0;
  for (int i = 0; i < P.rows; ++i) s += q.eta[i] * P.row_sum(i);
  r.rowSumDefect = std::abs(q.rho - s);
  return r;
}

}  // namespace qsmlab
