#include "dwell/matrix_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dwell/errors.hpp"

namespace dwell {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_square(const Mat& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw InvalidInput(std::string(what) + ": expected a non-empty square matrix");
  }
}

void require_finite(const Mat& a, const char* what) {
  if (!all_finite(a)) throw InvalidInput(std::string(what) + ": non-finite entry");
}

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(Mat& a) {
  const int n = static_cast<int>(a.rows());
  for (int k = 0; k + 2 < n; ++k) {
    Vec x = a.col(k).tail(n - k - 1);
    const double alpha = x.norm();
    if (alpha == 0.0) continue;
    Vec v = x;
    v(0) += (x(0) >= 0.0 ? alpha : -alpha);
    const double vnorm2 = v.squaredNorm();
    if (vnorm2 == 0.0) continue;
    // H = I - 2 v v' / (v'v) applied on both sides to the trailing block.
    auto rows = a.bottomRows(n - k - 1);
    Eigen::RowVectorXd w = (v.transpose() * rows) * (2.0 / vnorm2);
    rows -= v * w;
    auto cols = a.rightCols(n - k - 1);
    Vec u = (cols * v) * (2.0 / vnorm2);
    cols -= u * v.transpose();
    a.col(k).tail(n - k - 2).setZero();
  }
}

double sign_of(double a, double b) { return b >= 0.0 ? std::fabs(a) : -std::fabs(a); }

// Francis double-shift QR on an upper Hessenberg matrix. Eigenvalues are
// written to (wr, wi). The matrix is destroyed.
void hessenberg_qr(Mat& a, std::vector<double>& wr, std::vector<double>& wi) {
  const int n = static_cast<int>(a.rows());
  constexpr int kMaxIts = 60;
  wr.assign(n, 0.0);
  wi.assign(n, 0.0);
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::fabs(a(i, j));

  int nn = n - 1;
  double t = 0.0;
  double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l > 0; --l) {
        s = std::fabs(a(l - 1, l - 1)) + std::fabs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::fabs(a(l, l - 1)) <= kEps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn] = 0.0;
        --nn;
      } else {
        y = a(nn - 1, nn - 1);
        w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + w;
          z = std::sqrt(std::fabs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn - 1] = -z;
            wi[nn] = z;
          }
          nn -= 2;
        } else {
          if (its == kMaxIts) {
            throw NumericalFailure("spectral_radius: QR iteration did not converge");
          }
          if (its == 10 || its == 20 || its == 40) {
            // Exceptional shift.
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::fabs(a(nn, nn - 1)) + std::fabs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::fabs(p) + std::fabs(q) + std::fabs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::fabs(a(m, m - 1)) * (std::fabs(q) + std::fabs(r));
            const double v =
                std::fabs(p) * (std::fabs(a(m - 1, m - 1)) + std::fabs(z) + std::fabs(a(m + 1, m + 1)));
            if (u <= kEps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::fabs(p) + std::fabs(q) + std::fabs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
}

}  // namespace

SymMat::SymMat(const Mat& m) {
  require_square(m, "SymMat");
  require_finite(m, "SymMat");
  m_ = 0.5 * (m + m.transpose());
}

SymMat SymMat::identity(int n) { return SymMat(Mat::Identity(n, n)); }
SymMat SymMat::zeros(int n) { return SymMat(Mat::Zero(n, n)); }

SymMat SymMat::operator+(const SymMat& o) const { return SymMat(m_ + o.m_); }
SymMat SymMat::operator-(const SymMat& o) const { return SymMat(m_ - o.m_); }
SymMat SymMat::operator*(double s) const { return SymMat(m_ * s); }

SymEig sym_eig(const SymMat& s) {
  const int n = s.dim();
  if (n < 1) throw InvalidInput("sym_eig: empty matrix");
  Mat a = s.matrix();
  Mat v = Mat::Identity(n, n);
  const double scale2 = a.squaredNorm();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-32 * scale2 || off == 0.0) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
  SymEig out{Vec(n), Mat(n, n)};
  for (int i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]);
    out.basis.col(i) = v.col(order[i]);
  }
  return out;
}

double min_eig(const SymMat& s) { return sym_eig(s).values(0); }

double max_eig(const SymMat& s) {
  const SymEig e = sym_eig(s);
  return e.values(e.values.size() - 1);
}

double spectral_radius(const Mat& a) {
  require_square(a, "spectral_radius");
  require_finite(a, "spectral_radius");
  if (a.rows() == 1) return std::fabs(a(0, 0));
  Mat h = a;
  hessenberg(h);
  std::vector<double> wr, wi;
  hessenberg_qr(h, wr, wi);
  double rho = 0.0;
  for (std::size_t i = 0; i < wr.size(); ++i) rho = std::max(rho, std::hypot(wr[i], wi[i]));
  return rho;
}

Mat mat_pow(const Mat& a, int k) {
  require_square(a, "mat_pow");
  if (k < 0) throw InvalidInput("mat_pow: negative exponent");
  Mat result = Mat::Identity(a.rows(), a.cols());
  Mat base = a;
  while (k > 0) {
    if (k & 1) result = result * base;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return result;
}

Mat expm(const Mat& a) {
  require_square(a, "expm");
  require_finite(a, "expm");
  const int n = static_cast<int>(a.rows());
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  const Mat x = a / std::ldexp(1.0, squarings);

  // [6/6] Pade coefficients c_k = (12-k)! 6! / (12! k! (6-k)!).
  constexpr double c[7] = {1.0, 1.0 / 2.0, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};
  const Mat id = Mat::Identity(n, n);
  Mat numer = c[0] * id;
  Mat denom = c[0] * id;
  Mat power = id;
  for (int k = 1; k <= 6; ++k) {
    power = power * x;
    numer += c[k] * power;
    denom += ((k % 2) ? -c[k] : c[k]) * power;
  }
  Mat r = denom.partialPivLu().solve(numer);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

Mat solve_spd(const SymMat& s, const Mat& b) {
  if (b.rows() != s.dim()) throw DimensionMismatch("solve_spd: right-hand side rows do not match");
  Eigen::LLT<Mat> llt(s.matrix());
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("solve_spd: Cholesky breakdown");
  // LLT only reads the lower triangle; reject matrices whose factor is not usable.
  const Mat l = llt.matrixL();
  for (int i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) throw NotPositiveDefinite("solve_spd: Cholesky breakdown");
  }
  return llt.solve(b);
}

double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

bool all_finite(const Mat& m) { return m.allFinite(); }

SymMat congruence(const Mat& l, const SymMat& s) { return SymMat(l.transpose() * s.matrix() * l); }

}  // namespace dwell
