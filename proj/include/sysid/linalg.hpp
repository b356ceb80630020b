#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/matrix.hpp"

namespace sysid::linalg {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();

/// Maximum absolute column sum.
inline double norm1(const Matrix& a) {
  double best = 0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::fabs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

// ---------------------------------------------------------------------------
// LU factorization with partial pivoting
// ---------------------------------------------------------------------------

struct Lu {
  Matrix lu;              // packed L (unit diagonal) and U
  std::vector<int> piv;   // row permutation
  bool singular = false;  // an exactly-zero pivot was hit
};

inline Lu lu_factor(Matrix a) {
  if (a.rows() != a.cols()) throw DimensionError("lu_factor: matrix not square, " + a.shape_str());
  const std::size_t n = a.rows();
  Lu f{std::move(a), std::vector<int>(n), false};
  for (std::size_t i = 0; i < n; ++i) f.piv[i] = static_cast<int>(i);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::fabs(f.lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::fabs(f.lu(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(p, j));
      std::swap(f.piv[k], f.piv[p]);
    }
    const double pivot = f.lu(k, k);
    if (pivot == 0.0) {
      f.singular = true;
      continue;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = f.lu(i, k) / pivot;
      f.lu(i, k) = m;
      if (m == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) f.lu(i, j) -= m * f.lu(k, j);
    }
  }
  return f;
}

/// Solve A X = B for each column of B.
inline Matrix lu_solve(const Lu& f, const Matrix& b) {
  const std::size_t n = f.lu.rows();
  if (b.rows() != n)
    throw DimensionError("lu_solve: rhs rows " + b.shape_str() + " vs " + f.lu.shape_str());
  if (f.singular) throw SingularMatrixError("lu_solve: exactly singular matrix");
  Matrix x(n, b.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) x(i, j) = b(static_cast<std::size_t>(f.piv[i]), j);
  // forward substitution (unit lower)
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = f.lu(i, k);
      if (m == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) x(i, j) -= m * x(k, j);
    }
  // back substitution
  for (std::size_t k = n; k-- > 0;) {
    const double d = f.lu(k, k);
    for (std::size_t j = 0; j < b.cols(); ++j) x(k, j) /= d;
    for (std::size_t i = 0; i < k; ++i) {
      const double m = f.lu(i, k);
      if (m == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) x(i, j) -= m * x(k, j);
    }
  }
  return x;
}

inline Matrix solve(const Matrix& a, const Matrix& b) { return lu_solve(lu_factor(a), b); }

/**
 * Inverse via LU with partial pivoting. When rcond_out is given it receives
 * the reciprocal 1-norm condition estimate 1 / (||A||_1 ||A^-1||_1); the
 * inverse of an exactly singular matrix throws.
 */
inline Matrix invert(const Matrix& a, double* rcond_out = nullptr) {
  Lu f = lu_factor(a);
  if (f.singular) {
    if (rcond_out) *rcond_out = 0.0;
    throw SingularMatrixError("invert: exactly singular matrix " + a.shape_str());
  }
  Matrix inv = lu_solve(f, Matrix::identity(a.rows()));
  if (rcond_out) {
    const double na = norm1(a), ni = norm1(inv);
    *rcond_out = (na > 0 && ni > 0) ? 1.0 / (na * ni) : 0.0;
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Householder QR least squares with Jacobi-SVD rank handling
// ---------------------------------------------------------------------------

struct SvdSmall {
  Matrix u, v;                 // square, columns orthonormal
  std::vector<double> sigma;   // descending
};

/// One-sided Jacobi SVD of a small square matrix.
inline SvdSmall jacobi_svd(Matrix b) {
  const std::size_t q = b.rows();
  if (b.cols() != q) throw DimensionError("jacobi_svd: matrix not square");
  Matrix v = Matrix::identity(q);
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < q; ++p)
      for (std::size_t r = p + 1; r < q; ++r) {
        double app = 0, arr = 0, apr = 0;
        for (std::size_t i = 0; i < q; ++i) {
          app += b(i, p) * b(i, p);
          arr += b(i, r) * b(i, r);
          apr += b(i, p) * b(i, r);
        }
        if (std::fabs(apr) <= 1e-30 || std::fabs(apr) <= kEps * std::sqrt(app * arr)) continue;
        rotated = true;
        const double zeta = (arr - app) / (2.0 * apr);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < q; ++i) {
          const double bp = b(i, p), br = b(i, r);
          b(i, p) = c * bp - s * br;
          b(i, r) = s * bp + c * br;
          const double vp = v(i, p), vr = v(i, r);
          v(i, p) = c * vp - s * vr;
          v(i, r) = s * vp + c * vr;
        }
      }
    if (!rotated) break;
  }
  SvdSmall out{Matrix(q, q), std::move(v), std::vector<double>(q)};
  for (std::size_t j = 0; j < q; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < q; ++i) s += b(i, j) * b(i, j);
    s = std::sqrt(s);
    out.sigma[j] = s;
    if (s > 0)
      for (std::size_t i = 0; i < q; ++i) out.u(i, j) = b(i, j) / s;
  }
  // sort descending by sigma (selection sort keeps u/v/sigma aligned)
  for (std::size_t j = 0; j + 1 < q; ++j) {
    std::size_t best = j;
    for (std::size_t k = j + 1; k < q; ++k)
      if (out.sigma[k] > out.sigma[best]) best = k;
    if (best != j) {
      std::swap(out.sigma[j], out.sigma[best]);
      for (std::size_t i = 0; i < q; ++i) {
        std::swap(out.u(i, j), out.u(i, best));
        std::swap(out.v(i, j), out.v(i, best));
      }
    }
  }
  return out;
}

struct LsResult {
  Matrix solution;       // q×r
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/**
 * Minimize ||A X - B||_F columnwise for tall A (T×q, T >= 1). Householder QR
 * reduces to a q×q triangle; a Jacobi SVD of the triangle yields the
 * minimum-norm solution when the regressor is rank deficient.
 */
inline LsResult least_squares(Matrix a, Matrix b) {
  const std::size_t t = a.rows(), q = a.cols();
  if (b.rows() != t)
    throw DimensionError("least_squares: rhs rows " + b.shape_str() + " vs " + a.shape_str());
  if (t < q) {
    // pad with zero rows so the triangle is well defined (underdetermined case)
    Matrix a2(q, q), b2(q, b.cols());
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < q; ++j) a2(i, j) = a(i, j);
      for (std::size_t j = 0; j < b.cols(); ++j) b2(i, j) = b(i, j);
    }
    a = std::move(a2);
    b = std::move(b2);
  }
  const std::size_t rows = a.rows();
  for (std::size_t k = 0; k < q; ++k) {
    double norm = 0;
    for (std::size_t i = k; i < rows; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(k, k) >= 0 ? -norm : norm;
    std::vector<double> v(rows - k);
    v[0] = a(k, k) - alpha;
    for (std::size_t i = k + 1; i < rows; ++i) v[i - k] = a(i, k);
    double vtv = 0;
    for (double x : v) vtv += x * x;
    if (vtv == 0.0) continue;
    const double beta = 2.0 / vtv;
    a(k, k) = alpha;
    for (std::size_t i = k + 1; i < rows; ++i) a(i, k) = 0.0;
    for (std::size_t j = k + 1; j < q; ++j) {
      double s = 0;
      for (std::size_t i = k; i < rows; ++i) s += v[i - k] * a(i, j);
      s *= beta;
      for (std::size_t i = k; i < rows; ++i) a(i, j) -= s * v[i - k];
    }
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t i = k; i < rows; ++i) s += v[i - k] * b(i, j);
      s *= beta;
      for (std::size_t i = k; i < rows; ++i) b(i, j) -= s * v[i - k];
    }
  }
  Matrix r(q, q), c(q, b.cols());
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = i; j < q; ++j) r(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) = b(i, j);
  }
  SvdSmall svd = jacobi_svd(r);
  const double tol = static_cast<double>(q) * kEps * (svd.sigma.empty() ? 0.0 : svd.sigma[0]);
  LsResult out{Matrix(q, b.cols()), 0, false};
  Matrix utc = svd.u.transposed() * c;
  for (std::size_t k = 0; k < q; ++k) {
    if (svd.sigma[k] > tol && svd.sigma[k] > 0) {
      ++out.rank;
      for (std::size_t j = 0; j < utc.cols(); ++j) utc(k, j) /= svd.sigma[k];
    } else {
      for (std::size_t j = 0; j < utc.cols(); ++j) utc(k, j) = 0.0;
    }
  }
  out.solution = svd.v * utc;
  out.rank_deficient = out.rank < q;
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigenproblem (cyclic Jacobi) and SPD matrix square root
// ---------------------------------------------------------------------------

struct SymEig {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns aligned with values
};

inline SymEig jacobi_eigh(Matrix s, int max_sweeps = 64) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw DimensionError("jacobi_eigh: matrix not square");
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (std::sqrt(2.0 * off) <= 1e-14 * (s.frobenius_norm() + 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = s(p, q);
        if (apq == 0.0) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        const double tau = sn / (1.0 + c);
        const double app = s(p, p), aqq = s(q, q);
        s(p, p) = app - t * apq;
        s(q, q) = aqq + t * apq;
        s(p, q) = 0.0;
        s(q, p) = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i != p && i != q) {
            const double aip = s(i, p), aiq = s(i, q);
            s(i, p) = aip - sn * (aiq + tau * aip);
            s(p, i) = s(i, p);
            s(i, q) = aiq + sn * (aip - tau * aiq);
            s(q, i) = s(i, q);
          }
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = vip - sn * (viq + tau * vip);
          v(i, q) = viq + sn * (vip - tau * viq);
        }
      }
  }
  SymEig out{std::vector<double>(n), std::move(v)};
  for (std::size_t i = 0; i < n; ++i) out.values[i] = s(i, i);
  for (std::size_t j = 0; j + 1 < n; ++j) {  // ascending
    std::size_t best = j;
    for (std::size_t k = j + 1; k < n; ++k)
      if (out.values[k] < out.values[best]) best = k;
    if (best != j) {
      std::swap(out.values[j], out.values[best]);
      for (std::size_t i = 0; i < n; ++i) std::swap(out.vectors(i, j), out.vectors(i, best));
    }
  }
  return out;
}

inline double lambda_min_sym(const Matrix& s) { return jacobi_eigh(s).values.front(); }

/// Principal square root of a symmetric positive (semi)definite matrix.
inline Matrix sqrtm_spd(const Matrix& s) {
  SymEig e = jacobi_eigh(s);
  const double lmax = std::max(std::fabs(e.values.front()), std::fabs(e.values.back()));
  Matrix d(s.rows(), s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double lam = e.values[i];
    if (lam < 0) {
      if (lam < -1e-10 * std::max(1.0, lmax))
        throw NumericalError("sqrtm_spd: matrix has negative eigenvalue " + format_double(lam));
      lam = 0;
    }
    d(i, i) = std::sqrt(lam);
  }
  return e.vectors * d * e.vectors.transposed();
}

// ---------------------------------------------------------------------------
// General (real, nonsymmetric) eigenvalues: Hessenberg + Francis QR
// ---------------------------------------------------------------------------

namespace detail {

inline void hessenberg_reduce(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double norm = 0;
    for (std::size_t i = k + 1; i < n; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(k + 1, k) >= 0 ? -norm : norm;
    std::vector<double> v(n - k - 1);
    v[0] = a(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i - k - 1] = a(i, k);
    double vtv = 0;
    for (double x : v) vtv += x * x;
    if (vtv == 0.0) continue;
    const double beta = 2.0 / vtv;
    // left: rows k+1..n-1
    for (std::size_t j = k; j < n; ++j) {
      double s = 0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i - k - 1] * a(i, j);
      s *= beta;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i - k - 1];
    }
    // right: cols k+1..n-1
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j - k - 1];
      s *= beta;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j - k - 1];
    }
    a(k + 1, k) = alpha;
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

}  // namespace detail

/**
 * All eigenvalues of a real square matrix, by Householder reduction to upper
 * Hessenberg form followed by implicit double-shift QR iteration with
 * deflation. Results are sorted by (modulus, real part, imaginary part)
 * descending so the order is deterministic. Throws NumericalError if the
 * iteration has not deflated everything after 100*n sweeps.
 */
inline std::vector<std::complex<double>> eigenvalues(Matrix a) {
  using cd = std::complex<double>;
  if (a.rows() != a.cols()) throw DimensionError("eigenvalues: matrix not square, " + a.shape_str());
  const int n = static_cast<int>(a.rows());
  std::vector<cd> eig(static_cast<std::size_t>(n));
  if (n == 0) return eig;
  if (n == 1) {
    eig[0] = a(0, 0);
    return eig;
  }
  detail::hessenberg_reduce(a);
  auto h = [&a](int i, int j) -> double& {
    return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  };
  int budget = 100 * n;
  int m = n - 1;
  int its = 0;
  while (m >= 0) {
    // deflation scan for a negligible subdiagonal entry
    int l = m;
    while (l > 0) {
      double s = std::fabs(h(l - 1, l - 1)) + std::fabs(h(l, l));
      if (s == 0.0) s = 1.0;
      if (std::fabs(h(l, l - 1)) <= kEps * s) {
        h(l, l - 1) = 0.0;
        break;
      }
      --l;
    }
    if (l == m) {
      eig[static_cast<std::size_t>(m)] = h(m, m);
      --m;
      its = 0;
      continue;
    }
    if (l == m - 1) {
      const double aa = h(m - 1, m - 1), bb = h(m - 1, m), cc = h(m, m - 1), dd = h(m, m);
      const double p = 0.5 * (aa - dd);
      const double q = p * p + bb * cc;
      if (q < 0) {
        const double z = std::sqrt(-q);
        eig[static_cast<std::size_t>(m - 1)] = cd(dd + p, z);
        eig[static_cast<std::size_t>(m)] = cd(dd + p, -z);
      } else {
        const double r = std::sqrt(q);
        const double z = p + (p >= 0 ? r : -r);
        const double lam1 = dd + z;
        const double lam2 = (z != 0.0) ? dd - bb * cc / z : dd + p;
        eig[static_cast<std::size_t>(m - 1)] = lam1;
        eig[static_cast<std::size_t>(m)] = lam2;
      }
      m -= 2;
      its = 0;
      continue;
    }
    if (--budget < 0)
      throw NumericalError("eigenvalues: QR iteration did not converge within 100*n sweeps");
    ++its;
    double s_sum, t_prod;
    if (its % 10 == 0) {
      // exceptional shift to break symmetry-induced cycling
      const double w = std::fabs(h(m, m - 1)) + std::fabs(h(m - 1, m - 2));
      s_sum = 1.5 * w;
      t_prod = 0.5625 * w * w;
    } else {
      s_sum = h(m - 1, m - 1) + h(m, m);
      t_prod = h(m - 1, m - 1) * h(m, m) - h(m - 1, m) * h(m, m - 1);
    }
    // first column of (H - aI)(H - bI); search a safe interior start for the bulge
    int k0 = m - 2;
    double x = 0, y = 0, z = 0;
    for (; k0 >= l; --k0) {
      x = h(k0, k0) * h(k0, k0) + h(k0, k0 + 1) * h(k0 + 1, k0) - s_sum * h(k0, k0) + t_prod;
      y = h(k0 + 1, k0) * (h(k0, k0) + h(k0 + 1, k0 + 1) - s_sum);
      z = h(k0 + 1, k0) * h(k0 + 2, k0 + 1);
      if (k0 == l) break;
      const double u = std::fabs(h(k0, k0 - 1)) * (std::fabs(y) + std::fabs(z));
      const double v = std::fabs(x) * (std::fabs(h(k0 - 1, k0 - 1)) + std::fabs(h(k0, k0)) +
                                       std::fabs(h(k0 + 1, k0 + 1)));
      if (u <= kEps * v) break;
    }
    // bulge chase with 3x3 (or trailing 2x2) Householder reflections
    for (int k = k0; k <= m - 1; ++k) {
      const bool three = k + 2 <= m;
      double p, q, r;
      if (k == k0) {
        p = x;
        q = y;
        r = three ? z : 0.0;
      } else {
        p = h(k, k - 1);
        q = h(k + 1, k - 1);
        r = three ? h(k + 2, k - 1) : 0.0;
      }
      double scale = std::fabs(p) + std::fabs(q) + std::fabs(r);
      if (scale == 0.0) continue;
      p /= scale;
      q /= scale;
      r /= scale;
      double s = std::sqrt(p * p + q * q + r * r);
      if (p < 0) s = -s;
      if (s == 0.0) continue;
      if (k != k0) {
        h(k, k - 1) = -s * scale;
        h(k + 1, k - 1) = 0.0;
        if (three) h(k + 2, k - 1) = 0.0;
      } else if (l != k0) {
        // interior start: the dropped disturbance is negligible by the test above
        h(k, k - 1) = -h(k, k - 1);
      }
      const double v0 = p + s;
      const double beta = 1.0 / (s * v0);  // 2/(v'v) for v=(p+s, q, r), since v'v = 2 s (p+s)
      const double vv[3] = {v0, q, r};
      for (int j = k; j <= m; ++j) {
        double t = vv[0] * h(k, j) + vv[1] * h(k + 1, j);
        if (three) t += vv[2] * h(k + 2, j);
        t *= beta;
        h(k, j) -= t * vv[0];
        h(k + 1, j) -= t * vv[1];
        if (three) h(k + 2, j) -= t * vv[2];
      }
      const int ihi = std::min(m, k + 3);
      for (int i = l; i <= ihi; ++i) {
        double t = vv[0] * h(i, k) + vv[1] * h(i, k + 1);
        if (three) t += vv[2] * h(i, k + 2);
        t *= beta;
        h(i, k) -= t * vv[0];
        h(i, k + 1) -= t * vv[1];
        if (three) h(i, k + 2) -= t * vv[2];
      }
    }
  }
  std::sort(eig.begin(), eig.end(), [](const cd& a_, const cd& b_) {
    const double ma = std::abs(a_), mb = std::abs(b_);
    if (ma != mb) return ma > mb;
    if (a_.real() != b_.real()) return a_.real() > b_.real();
    return a_.imag() > b_.imag();
  });
  return eig;
}

inline double spectral_radius(const Matrix& a) {
  auto eig = eigenvalues(a);
  double r = 0;
  for (const auto& lam : eig) r = std::max(r, std::abs(lam));
  return r;
}

// ---------------------------------------------------------------------------
// Inverse iteration for a single eigenvector (complex shift)
// ---------------------------------------------------------------------------

inline std::vector<std::complex<double>> inverse_iteration(const Matrix& a,
                                                           std::complex<double> lambda,
                                                           int iterations = 3) {
  using cd = std::complex<double>;
  const std::size_t n = a.rows();
  std::vector<cd> m(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = cd(a(i, j)) - (i == j ? lambda : cd(0));
  // complex LU with partial pivoting; near-zero pivots are nudged, which is
  // exactly what inverse iteration wants
  std::vector<std::size_t> piv(n);
  for (std::size_t i = 0; i < n; ++i) piv[i] = i;
  const double tiny = std::max(1.0, a.max_abs()) * 1e-300 + 1e-300;
  const double bump = std::max(1.0, a.max_abs()) * kEps;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(m[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(m[i * n + k]) > best) {
        best = std::abs(m[i * n + k]);
        p = i;
      }
    if (p != k)
      for (std::size_t j = 0; j < n; ++j) std::swap(m[k * n + j], m[p * n + j]);
    if (p != k) std::swap(piv[k], piv[p]);
    if (std::abs(m[k * n + k]) < tiny) m[k * n + k] = cd(bump, 0);
    for (std::size_t i = k + 1; i < n; ++i) {
      const cd f = m[i * n + k] / m[k * n + k];
      m[i * n + k] = f;
      for (std::size_t j = k + 1; j < n; ++j) m[i * n + j] -= f * m[k * n + j];
    }
  }
  std::vector<cd> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = cd(1.0 + 0.01 * static_cast<double>(i), 0.0);
  for (int it = 0; it < iterations; ++it) {
    std::vector<cd> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = v[piv[i]];
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = k + 1; i < n; ++i) b[i] -= m[i * n + k] * b[k];
    for (std::size_t k = n; k-- > 0;) {
      for (std::size_t j = k + 1; j < n; ++j) b[k] -= m[k * n + j] * b[j];
      b[k] /= m[k * n + k];
    }
    double norm = 0;
    for (const cd& x : b) norm += std::norm(x);
    norm = std::sqrt(norm);
    if (!(norm > 0) || !std::isfinite(norm)) break;
    for (std::size_t i = 0; i < n; ++i) v[i] = b[i] / norm;
  }
  return v;
}

/**
 * Spectral radius with its gradient w.r.t. the matrix entries, using the
 * eigenvalue perturbation formula on the dominant simple eigenpair. A complex
 * conjugate dominant pair is treated as simple (the modulus is differentiable
 * there); a genuine modulus tie between distinct eigenvalue groups sets
 * `degenerate` and returns a zero gradient.
 */
struct SpectralRadiusInfo {
  double value = 0;
  Matrix gradient;
  bool degenerate = false;
};

inline SpectralRadiusInfo spectral_radius_with_gradient(const Matrix& a,
                                                        double tie_tol = 1e-8) {
  using cd = std::complex<double>;
  const std::size_t n = a.rows();
  SpectralRadiusInfo out;
  out.gradient = Matrix(n, n);
  auto eig = eigenvalues(a);
  const cd lam = eig[0];
  out.value = std::abs(lam);
  if (out.value == 0.0) {
    out.degenerate = true;
    return out;
  }
  std::size_t ties = 0;
  bool conjugate_partner = false;
  for (const auto& e : eig) {
    if (std::abs(e) >= out.value * (1.0 - tie_tol)) {
      ++ties;
      if (std::abs(e - std::conj(lam)) <= 1e-8 * out.value && std::fabs(lam.imag()) > 0) {
        if (&e != &eig[0]) conjugate_partner = true;
      }
    }
  }
  const bool simple_real = (std::fabs(lam.imag()) == 0.0 || std::fabs(lam.imag()) <= 1e-14 * out.value)
                               ? (ties == 1)
                               : false;
  const bool simple_pair = (std::fabs(lam.imag()) > 1e-14 * out.value) && ties == 2 && conjugate_partner;
  if (!simple_real && !simple_pair) {
    out.degenerate = true;
    return out;
  }
  auto v = inverse_iteration(a, lam);
  auto z = inverse_iteration(a.transposed(), lam);
  // residual check: refuse a bad eigenvector (defective dominant block)
  double resid = 0, scale = a.max_abs() + out.value;
  for (std::size_t i = 0; i < n; ++i) {
    cd r = -lam * v[i];
    for (std::size_t j = 0; j < n; ++j) r += cd(a(i, j)) * v[j];
    resid += std::norm(r);
  }
  if (std::sqrt(resid) > 1e-6 * std::max(1.0, scale)) {
    out.degenerate = true;
    return out;
  }
  cd denom(0);
  for (std::size_t i = 0; i < n; ++i) denom += z[i] * v[i];
  if (std::abs(denom) < 1e-12) {
    out.degenerate = true;
    return out;
  }
  const cd prefactor = std::conj(lam) / (out.value * denom);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.gradient(i, j) = (prefactor * z[i] * v[j]).real();
  return out;
}

// ---------------------------------------------------------------------------
// Kronecker helpers
// ---------------------------------------------------------------------------

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
    }
  return k;
}

/// Stack columns into a single column vector.
inline Matrix vec_col(const Matrix& m) {
  Matrix v(m.rows() * m.cols(), 1);
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) v(j * m.rows() + i, 0) = m(i, j);
  return v;
}

inline Matrix unvec_col(const Matrix& v, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = v(j * rows + i, 0);
  return m;
}

}  // namespace sysid::linalg
