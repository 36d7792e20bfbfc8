#include "locstat/measure.hpp"

#include <cmath>
#include <sstream>

namespace locstat {

StateSpace StateSpace::indexed(int m) {
  if (m <= 0) throw ContractViolation("StateSpace: size must be positive");
  StateSpace s;
  s.labels.reserve(m);
  s.points.reserve(m);
  for (int i = 0; i < m; ++i) {
    s.labels.push_back(std::to_string(i));
    s.points.push_back({double(i)});
  }
  return s;
}

StateSpace StateSpace::grid(const std::vector<double>& centers) {
  if (centers.empty()) throw ContractViolation("StateSpace: empty grid");
  StateSpace s;
  s.labels.reserve(centers.size());
  s.points.reserve(centers.size());
  for (double c : centers) {
    std::ostringstream os;
    os << c;
    s.labels.push_back(os.str());
    s.points.push_back({c});
  }
  return s;
}

StateSpace StateSpace::power(const StateSpace& base, int j) {
  if (j < 1) throw ContractViolation("StateSpace::power: j must be >= 1");
  StateSpace out = base;
  for (int i = 1; i < j; ++i) out = product(out, base);
  return out;
}

StateSpace StateSpace::product(const StateSpace& a, const StateSpace& b) {
  StateSpace s;
  s.labels.reserve(std::size_t(a.size()) * b.size());
  s.points.reserve(std::size_t(a.size()) * b.size());
  for (int i = 0; i < a.size(); ++i) {
    for (int k = 0; k < b.size(); ++k) {
      s.labels.push_back(a.labels[i] + "|" + b.labels[k]);
      std::vector<double> pt = a.points[i];
      pt.insert(pt.end(), b.points[k].begin(), b.points[k].end());
      s.points.push_back(std::move(pt));
    }
  }
  return s;
}

WeightFunction::WeightFunction(Eigen::VectorXd values, std::string n)
    : v(std::move(values)), name(std::move(n)) {
  for (int i = 0; i < v.size(); ++i) {
    if (!(v(i) >= 1.0)) {
      std::ostringstream os;
      os << "WeightFunction '" << name << "': V(" << i << ") = " << v(i)
         << " < 1";
      throw ContractViolation(os.str());
    }
  }
}

WeightFunction WeightFunction::ones(int m, std::string n) {
  return WeightFunction(Eigen::VectorXd::Ones(m), std::move(n));
}

TransitionKernel::TransitionKernel(Eigen::MatrixXd P, double row_tol)
    : P_(std::move(P)) {
  if (P_.rows() != P_.cols() || P_.rows() == 0)
    throw ContractViolation("TransitionKernel: matrix must be square");
  for (int i = 0; i < P_.rows(); ++i) {
    double sum = 0.0, comp = 0.0;  // Kahan: rows can be long
    for (int j = 0; j < P_.cols(); ++j) {
      double e = P_(i, j);
      if (e < 0.0) {
        if (e < -1e-12) {
          std::ostringstream os;
          os << "TransitionKernel: negative entry " << e << " at (" << i << ","
             << j << ")";
          throw ContractViolation(os.str());
        }
        P_(i, j) = e = 0.0;
      }
      const double y = e - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    if (std::abs(sum - 1.0) > row_tol) {
      std::ostringstream os;
      os << "TransitionKernel: row " << i << " sums to " << sum
         << " (|sum-1| = " << std::abs(sum - 1.0) << " > " << row_tol
         << "); renormalization is refused";
      throw ContractViolation(os.str());
    }
  }
}

double total_mass(const Measure& mu) { return mu.sum(); }

double vnorm(const Measure& mu, const WeightFunction& V) {
  if (mu.size() != V.size())
    throw ContractViolation("vnorm: measure/weight dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < mu.size(); ++i) s += V(i) * std::abs(mu(i));
  return s;
}

Measure apply_kernel(const Measure& mu, const TransitionKernel& P) {
  if (mu.size() != P.size())
    throw ContractViolation("apply_kernel: dimension mismatch");
  return mu * P.matrix();
}

TransitionKernel kernel_power(const TransitionKernel& P, int n) {
  if (n < 1) throw ContractViolation("kernel_power: n must be >= 1");
  Eigen::MatrixXd M = P.matrix();
  for (int i = 1; i < n; ++i) M = M * P.matrix();
  return TransitionKernel(std::move(M), double(n) * 1e-12);
}

namespace {

double pair_distance(const Eigen::MatrixXd& P, const Eigen::VectorXd& V, int x,
                     int y) {
  double s = 0.0;
  for (int z = 0; z < P.cols(); ++z) s += V(z) * std::abs(P(x, z) - P(y, z));
  return s / (V(x) + V(y));
}

}  // namespace

double dobrushin_coeff_serial(const TransitionKernel& P,
                              const WeightFunction& V) {
  if (V.size() != P.size())
    throw ContractViolation("dobrushin_coeff: dimension mismatch");
  const Eigen::MatrixXd& M = P.matrix();
  const int m = P.size();
  double best = 0.0;
  for (int x = 0; x < m; ++x)
    for (int y = x + 1; y < m; ++y)
      best = std::max(best, pair_distance(M, V.v, x, y));
  return best;
}

double dobrushin_coeff(const TransitionKernel& P, const WeightFunction& V) {
  if (V.size() != P.size())
    throw ContractViolation("dobrushin_coeff: dimension mismatch");
  const Eigen::MatrixXd& M = P.matrix();
  const int m = P.size();
  double best = 0.0;
#pragma omp parallel for schedule(dynamic, 4) reduction(max : best)
  for (int x = 0; x < m; ++x) {
    double local = 0.0;
    for (int y = x + 1; y < m; ++y)
      local = std::max(local, pair_distance(M, V.v, x, y));
    best = std::max(best, local);
  }
  return best;
}

double ergodicity_bound(const TransitionKernel& P, const Measure& pi,
                        const WeightFunction& V) {
  if (pi.size() != P.size() || V.size() != P.size())
    throw ContractViolation("ergodicity_bound: dimension mismatch");
  const Eigen::MatrixXd& M = P.matrix();
  double best = 0.0;
  for (int x = 0; x < P.size(); ++x) {
    double s = 0.0;
    for (int z = 0; z < P.size(); ++z) s += V(z) * std::abs(M(x, z) - pi(z));
    best = std::max(best, s / V(x));
  }
  return best;
}

}  // namespace locstat
