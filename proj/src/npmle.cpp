#include "mixlrt/npmle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mixlrt/error.hpp"

namespace mixlrt {

double gradient_fn(const ParamSpace& space, const Dataset& data, const MixingMeasure& g, std::span<const double> theta) {
  space.check_theta(theta);
  double s = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double lf = log_mixture_density(space, g, data.row(i));
    if (lf == kLogZero) return kLogZero;
    s += std::exp(space.log_kernel(theta, data.row(i)) - lf);
  }
  return s - static_cast<double>(data.n());
}

namespace {

constexpr double kArmijo = 1.0 / 3.0;
constexpr double kPruneWeight = 1e-12;

// min ||R w - y|| subject to sum(w) = 1, w >= 0, by a primal active-set method
// started from the feasible point w.
Eigen::VectorXd simplex_ls(const Eigen::MatrixXd& R, const Eigen::VectorXd& y, Eigen::VectorXd w) {
  const Eigen::Index J = R.cols();
  std::vector<char> free(J);
  for (Eigen::Index j = 0; j < J; ++j) free[j] = w(j) > 0.0;
  const double scale = std::max(1.0, (R.transpose() * y).cwiseAbs().maxCoeff());
  for (int iter = 0; iter < 10 * J + 50; ++iter) {
    std::vector<Eigen::Index> F;
    for (Eigen::Index j = 0; j < J; ++j)
      if (free[j]) F.push_back(j);
    Eigen::MatrixXd RF(R.rows(), static_cast<Eigen::Index>(F.size()));
    for (std::size_t k = 0; k < F.size(); ++k) RF.col(static_cast<Eigen::Index>(k)) = R.col(F[k]);
    // w_F = e / |F| + Z u with Z an orthonormal basis of {sum = 0}; u is the minimum-norm LS solution.
    const Eigen::Index nf = static_cast<Eigen::Index>(F.size());
    Eigen::VectorXd wf = Eigen::VectorXd::Constant(nf, 1.0 / static_cast<double>(nf));
    if (nf > 1) {
      const Eigen::HouseholderQR<Eigen::MatrixXd> hq(Eigen::MatrixXd::Ones(nf, 1));
      const Eigen::MatrixXd Z = (hq.householderQ() * Eigen::MatrixXd::Identity(nf, nf)).rightCols(nf - 1);
      const Eigen::VectorXd u = (RF * Z).completeOrthogonalDecomposition().solve(y - RF * wf);
      wf += Z * u;
    }
    bool inside = true;
    for (Eigen::Index k = 0; k < wf.size(); ++k) inside = inside && wf(k) > 0.0;
    if (!inside) {
      double alpha = 1.0;
      Eigen::Index block = -1;
      for (std::size_t k = 0; k < F.size(); ++k) {
        const double cur = w(F[k]), nxt = wf(static_cast<Eigen::Index>(k));
        if (nxt <= 0.0 && cur - nxt > 0.0 && cur / (cur - nxt) <= alpha) {
          alpha = cur / (cur - nxt);
          block = F[k];
        }
      }
      for (std::size_t k = 0; k < F.size(); ++k) w(F[k]) += alpha * (wf(static_cast<Eigen::Index>(k)) - w(F[k]));
      for (Eigen::Index j : F)
        if (j == block || w(j) <= 0.0) {
          w(j) = 0.0;
          free[j] = 0;
        }
      w /= w.sum();
      continue;
    }
    w.setZero();
    for (std::size_t k = 0; k < F.size(); ++k) w(F[k]) = wf(static_cast<Eigen::Index>(k));
    const Eigen::VectorXd g = R.transpose() * (R * w - y);
    double gf = 0.0;
    for (Eigen::Index j : F) gf += g(j);
    gf /= static_cast<double>(F.size());
    Eigen::Index enter = -1;
    double best = -1e-13 * scale;
    for (Eigen::Index j = 0; j < J; ++j)
      if (!free[j] && g(j) - gf < best) {
        best = g(j) - gf;
        enter = j;
      }
    if (enter < 0) break;
    free[enter] = 1;
  }
  return w;
}

class Solver {
 public:
  Solver(const ParamSpace& space, const Dataset& data, const NpmleOptions& opts) : space_(space), opts_(opts) {
    d_ = space.dim();
    compress(data);
    const int G = opts.grid_per_axis > 0 ? opts.grid_per_axis : (d_ == 1 ? 512 : 64);
    if (G < 2) throw InputError("npmle_solve: grid_per_axis must be at least 2");
    grid_.resize(d_);
    step_.resize(d_);
    for (int l = 0; l < d_; ++l) {
      const Axis& a = space.axis(l);
      step_[l] = (a.hi - a.lo) / (G - 1);
      for (int g = 0; g < G; ++g) grid_[l].push_back(g == G - 1 ? a.hi : a.lo + g * step_[l]);
    }
    grid_size_ = 1;
    for (int l = 0; l < d_; ++l) grid_size_ *= grid_[l].size();
    gaussian_1d_ = d_ == 1 && space.axis(0).kind == AxisKind::kGaussian;
  }

  NpmleResult run();

 private:
  const ParamSpace& space_;
  NpmleOptions opts_;
  int d_ = 1;
  std::size_t nu_ = 0;
  double n_ = 0.0;
  std::vector<double> x_, count_, ref_;
  std::vector<std::vector<double>> grid_;
  std::vector<double> step_;
  std::size_t grid_size_ = 0;
  bool gaussian_1d_ = false;
  std::vector<Eigen::MatrixXd> tables_;

  std::vector<double> atoms_;
  std::vector<double> w_;
  std::vector<std::vector<double>> cols_;
  std::vector<double> f_;
  double ll_ = 0.0;

  std::span<const double> obs(std::size_t i) const { return {x_.data() + i * d_, static_cast<std::size_t>(d_)}; }
  std::span<const double> atom(std::size_t j) const { return {atoms_.data() + j * d_, static_cast<std::size_t>(d_)}; }

  void compress(const Dataset& data) {
    if (data.d != d_) throw InputError("npmle_solve: dataset dimension mismatch");
    if (data.n() == 0) throw InputError("npmle_solve: empty dataset");
    std::vector<std::size_t> order(data.n());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < data.n(); ++i) space_.check_observation(data.row(i));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      auto ra = data.row(a), rb = data.row(b);
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto r = data.row(order[k]);
      if (k > 0 && std::equal(r.begin(), r.end(), data.row(order[k - 1]).begin())) {
        count_.back() += 1.0;
        continue;
      }
      x_.insert(x_.end(), r.begin(), r.end());
      count_.push_back(1.0);
      double ref = 0.0;
      for (int l = 0; l < d_; ++l) ref += space_.log_kernel_axis_sup(l, r[l]);
      ref_.push_back(ref);
    }
    nu_ = count_.size();
    n_ = static_cast<double>(data.n());
  }

  double scaled_kernel(std::size_t i, std::span<const double> theta) const {
    return std::exp(space_.log_kernel(theta, obs(i)) - ref_[i]);
  }

  std::vector<double> column(std::span<const double> theta) const {
    std::vector<double> c(nu_);
    for (std::size_t i = 0; i < nu_; ++i) c[i] = scaled_kernel(i, theta);
    return c;
  }

  double loglik_of(const std::vector<double>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nu_; ++i) s += count_[i] * (std::log(f[i]) + ref_[i]);
    return s;
  }

  void recompute_f() {
    f_.assign(nu_, 0.0);
    for (std::size_t j = 0; j < w_.size(); ++j)
      for (std::size_t i = 0; i < nu_; ++i) f_[i] += w_[j] * cols_[j][i];
    ll_ = loglik_of(f_);
  }

  std::vector<double> grid_point(std::size_t flat) const {
    std::vector<double> t(d_);
    for (int l = d_ - 1; l >= 0; --l) {
      const std::size_t G = grid_[l].size();
      t[l] = grid_[l][flat % G];
      flat /= G;
    }
    return t;
  }

  double D_at(std::span<const double> theta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nu_; ++i) s += count_[i] * scaled_kernel(i, theta) / f_[i];
    return s - n_;
  }

  // Derivatives of log p_theta(x) along axis l.
  void log_kernel_derivs(int l, double theta, double x, double& d1, double& d2) const {
    const Axis& a = space_.axis(l);
    switch (a.kind) {
      case AxisKind::kGaussian:
        d1 = x - theta;
        d2 = -1.0;
        break;
      case AxisKind::kPoisson:
        d1 = x / theta - 1.0;
        d2 = -x / (theta * theta);
        break;
      case AxisKind::kBinomial: {
        const double m = a.trials - x;
        d1 = x / theta - m / (1.0 - theta);
        d2 = -x / (theta * theta) - m / ((1.0 - theta) * (1.0 - theta));
        break;
      }
    }
  }

  double D_derivs(std::span<const double> theta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    grad.setZero(d_);
    hess.setZero(d_, d_);
    Eigen::VectorXd g1(d_), g2(d_);
    double s = 0.0;
    for (std::size_t i = 0; i < nu_; ++i) {
      const double v = count_[i] * scaled_kernel(i, theta) / f_[i];
      s += v;
      for (int l = 0; l < d_; ++l) log_kernel_derivs(l, theta[l], x_[i * d_ + l], g1(l), g2(l));
      grad += v * g1;
      hess.noalias() += v * (g1 * g1.transpose());
      hess.diagonal() += v * g2;
    }
    return s - n_;
  }

  void build_tables() {
    if (!tables_.empty() || gaussian_1d_) return;
    tables_.resize(d_);
    for (int l = 0; l < d_; ++l) {
      const std::size_t G = grid_[l].size();
      tables_[l].resize(static_cast<Eigen::Index>(nu_), static_cast<Eigen::Index>(G));
      for (std::size_t i = 0; i < nu_; ++i) {
        const double xl = x_[i * d_ + l];
        const double rl = space_.log_kernel_axis_sup(l, xl);
        for (std::size_t g = 0; g < G; ++g) tables_[l](i, g) = std::exp(space_.log_kernel_axis(l, grid_[l][g], xl) - rl);
      }
    }
  }

  void D_grid(std::vector<double>& out) {
    out.assign(grid_size_, 0.0);
    std::vector<double> v(nu_);
    for (std::size_t i = 0; i < nu_; ++i) v[i] = count_[i] / f_[i];
    if (gaussian_1d_) {
      // exp(-(x - t_g)^2 / 2 + dist^2 / 2) stepped outward from the nearest node.
      const std::size_t G = grid_[0].size();
      const double h = step_[0];
      const double lo = grid_[0].front();
      const double decay = std::exp(-h * h);
      for (std::size_t i = 0; i < nu_; ++i) {
        const double x = x_[i];
        const std::ptrdiff_t gs = std::clamp<std::ptrdiff_t>(std::llround((x - lo) / h), 0, static_cast<std::ptrdiff_t>(G) - 1);
        const double t = lo + gs * h;
        const double base = std::exp(space_.log_kernel_axis(0, t, x) - ref_[i]);
        const double vi = v[i];
        out[gs] += vi * base;
        double e = base;
        double rho = std::exp(h * (x - t) - 0.5 * h * h);
        for (std::size_t g = gs + 1; g < G; ++g) {
          e *= rho;
          rho *= decay;
          out[g] += vi * e;
        }
        e = base;
        rho = std::exp(-h * (x - t) - 0.5 * h * h);
        for (std::ptrdiff_t g = gs - 1; g >= 0; --g) {
          e *= rho;
          rho *= decay;
          out[g] += vi * e;
        }
      }
    } else {
      build_tables();
      Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(nu_));
      if (d_ == 1) {
        Eigen::VectorXd r = tables_[0].transpose() * vv;
        for (std::size_t g = 0; g < grid_size_; ++g) out[g] = r(g);
      } else if (d_ == 2) {
        Eigen::MatrixXd r = tables_[0].transpose() * (vv.asDiagonal() * tables_[1]);
        const std::size_t G1 = grid_[1].size();
        for (std::size_t a = 0; a < grid_[0].size(); ++a)
          for (std::size_t b = 0; b < G1; ++b) out[a * G1 + b] = r(a, b);
      } else {
        std::vector<std::size_t> idx(d_);
        for (std::size_t flat = 0; flat < grid_size_; ++flat) {
          std::size_t rem = flat;
          for (int l = d_ - 1; l >= 0; --l) {
            idx[l] = rem % grid_[l].size();
            rem /= grid_[l].size();
          }
          double s = 0.0;
          for (std::size_t i = 0; i < nu_; ++i) {
            double p = v[i];
            for (int l = 0; l < d_; ++l) p *= tables_[l](i, idx[l]);
            s += p;
          }
          out[flat] = s;
        }
      }
    }
    for (double& o : out) o -= n_;
  }

  // Grid local maxima; ties go to the lowest flat index.
  std::vector<std::size_t> local_maxima(const std::vector<double>& D) const {
    std::vector<std::size_t> out;
    std::vector<std::ptrdiff_t> idx(d_), nb(d_);
    std::vector<std::size_t> stride(d_);
    std::size_t s = 1;
    for (int l = d_ - 1; l >= 0; --l) {
      stride[l] = s;
      s *= grid_[l].size();
    }
    const int nbr = static_cast<int>(std::pow(3, d_));
    for (std::size_t flat = 0; flat < grid_size_; ++flat) {
      std::size_t rem = flat;
      for (int l = d_ - 1; l >= 0; --l) {
        idx[l] = static_cast<std::ptrdiff_t>(rem % grid_[l].size());
        rem /= grid_[l].size();
      }
      bool is_max = true;
      for (int code = 0; code < nbr && is_max; ++code) {
        int c = code;
        bool self = true;
        std::ptrdiff_t other = 0;
        bool inside = true;
        for (int l = d_ - 1; l >= 0; --l) {
          const int off = c % 3 - 1;
          c /= 3;
          if (off != 0) self = false;
          nb[l] = idx[l] + off;
          if (nb[l] < 0 || nb[l] >= static_cast<std::ptrdiff_t>(grid_[l].size())) inside = false;
          other += nb[l] * static_cast<std::ptrdiff_t>(stride[l]);
        }
        if (self || !inside) continue;
        const double dv = D[static_cast<std::size_t>(other)];
        if (static_cast<std::size_t>(other) < flat ? !(D[flat] > dv) : !(D[flat] >= dv)) is_max = false;
      }
      if (is_max) out.push_back(flat);
    }
    return out;
  }

  void clamp_to_box(std::vector<double>& t) const {
    for (int l = 0; l < d_; ++l) t[l] = std::clamp(t[l], space_.axis(l).lo, space_.axis(l).hi);
  }

  // Local refinement then Newton ascent on D; returns the point and its D value.
  std::pair<std::vector<double>, double> polish(std::vector<double> center) const {
    double best = D_at(center);
    std::vector<double> trial(d_);
    const int pts = static_cast<int>(std::pow(5, d_));
    for (int r = 1; r <= opts_.refine_rounds; ++r) {
      std::vector<double> c0 = center;
      for (int code = 0; code < pts; ++code) {
        int c = code;
        for (int l = d_ - 1; l >= 0; --l) {
          trial[l] = c0[l] + (c % 5 - 2) * step_[l] / std::pow(4.0, r);
          c /= 5;
        }
        clamp_to_box(trial);
        const double v = D_at(trial);
        if (v > best) {
          best = v;
          center = trial;
        }
      }
    }
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    for (int it = 0; it < 30; ++it) {
      const double cur = D_derivs(center, grad, hess);
      best = std::max(best, cur);
      Eigen::VectorXd dir;
      Eigen::LLT<Eigen::MatrixXd> llt(-hess);
      if (llt.info() == Eigen::Success) {
        dir = llt.solve(grad);
      } else {
        const double gn = grad.norm();
        if (gn == 0.0) break;
        dir = grad / gn * (0.25 * *std::min_element(step_.begin(), step_.end()));
      }
      // Drop components that push against an active bound.
      for (int l = 0; l < d_; ++l) {
        const Axis& a = space_.axis(l);
        if ((center[l] <= a.lo && dir(l) < 0) || (center[l] >= a.hi && dir(l) > 0)) dir(l) = 0.0;
      }
      bool moved = false;
      double alpha = 1.0;
      for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
        for (int l = 0; l < d_; ++l) trial[l] = center[l] + alpha * dir(l);
        clamp_to_box(trial);
        const double v = D_at(trial);
        if (v > cur) {
          double shift = 0.0;
          for (int l = 0; l < d_; ++l) shift = std::max(shift, std::abs(trial[l] - center[l]) / (space_.axis(l).hi - space_.axis(l).lo));
          center = trial;
          best = std::max(best, v);
          moved = shift > 1e-14;
          break;
        }
      }
      if (!moved) break;
    }
    return {center, D_at(center) > best ? D_at(center) : best};
  }

  bool add_atom(const std::vector<double>& theta) {
    for (std::size_t j = 0; j < w_.size(); ++j) {
      bool same = true;
      for (int l = 0; l < d_; ++l)
        if (std::abs(atom(j)[l] - theta[l]) > 1e-12 * (space_.axis(l).hi - space_.axis(l).lo)) same = false;
      if (same) return false;
    }
    atoms_.insert(atoms_.end(), theta.begin(), theta.end());
    w_.push_back(0.0);
    cols_.push_back(column(theta));
    return true;
  }

  void remove_atoms(const std::vector<char>& drop) {
    std::vector<double> atoms;
    std::vector<double> w;
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < w_.size(); ++j) {
      if (drop[j]) continue;
      atoms.insert(atoms.end(), atom(j).begin(), atom(j).end());
      w.push_back(w_[j]);
      cols.push_back(std::move(cols_[j]));
    }
    atoms_ = std::move(atoms);
    w_ = std::move(w);
    cols_ = std::move(cols);
  }

  // One constrained-Newton step on the simplex; returns the directional derivative of the step.
  double weight_step() {
    const std::size_t J = w_.size();
    const Eigen::Index n = static_cast<Eigen::Index>(nu_);
    Eigen::MatrixXd A(n, static_cast<Eigen::Index>(J));
    Eigen::VectorXd b(n);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
    for (std::size_t i = 0; i < nu_; ++i) {
      const double sc = std::sqrt(count_[i]);
      b(i) = 2.0 * sc;
      for (std::size_t j = 0; j < J; ++j) {
        const double s = cols_[j][i] / f_[i];
        A(i, j) = sc * s;
        grad(j) += count_[i] * s;
      }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::Index k = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(J));
    Eigen::MatrixXd R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    Eigen::VectorXd y = (qr.householderQ().transpose() * b).head(k);
    Eigen::Map<const Eigen::VectorXd> w(w_.data(), static_cast<Eigen::Index>(J));
    const Eigen::VectorXd wn = simplex_ls(R, y, w);
    const Eigen::VectorXd delta = wn - w;
    const double dd = grad.dot(delta);
    if (!(dd > 0.0)) return 0.0;
    std::vector<double> fd(nu_, 0.0), trial(nu_);
    for (std::size_t j = 0; j < J; ++j)
      if (delta(j) != 0.0)
        for (std::size_t i = 0; i < nu_; ++i) fd[i] += delta(j) * cols_[j][i];
    double alpha = 1.0;
    for (int bt = 0; bt < 50; ++bt, alpha *= 0.5) {
      bool positive = true;
      for (std::size_t i = 0; i < nu_; ++i) {
        trial[i] = f_[i] + alpha * fd[i];
        if (!(trial[i] > 0.0)) positive = false;
      }
      if (!positive) continue;
      const double ll = loglik_of(trial);
      if (ll >= ll_ + kArmijo * alpha * dd) {
        for (std::size_t j = 0; j < J; ++j) w_[j] = std::max(0.0, w_[j] + alpha * delta(j));
        f_ = trial;
        ll_ = ll;
        break;
      }
    }
    return dd;
  }

  // Moves weight along null directions of [columns; 1] until atoms drop out, keeping f (nearly) fixed.
  void reduce_support() {
    for (int guard = 0; w_.size() > nu_ && guard < 1000; ++guard) {
      const Eigen::Index J = static_cast<Eigen::Index>(w_.size());
      const Eigen::Index m = static_cast<Eigen::Index>(nu_);
      Eigen::MatrixXd M(m + 1, J);
      for (Eigen::Index j = 0; j < J; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) M(i, j) = cols_[j][i] / f_[i];
        M(m, j) = 1.0;
      }
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
      const Eigen::VectorXd v = svd.matrixV().col(J - 1);
      const std::vector<double> atoms0 = atoms_, w0 = w_, f0 = f_;
      const std::vector<std::vector<double>> cols0 = cols_;
      const double ll0 = ll_;
      double best_ll = -std::numeric_limits<double>::infinity();
      std::vector<double> best_w;
      for (double sign : {1.0, -1.0}) {
        double t = std::numeric_limits<double>::infinity();
        Eigen::Index hit = -1;
        for (Eigen::Index j = 0; j < J; ++j)
          if (sign * v(j) < 0.0 && w0[j] / (-sign * v(j)) < t) {
            t = w0[j] / (-sign * v(j));
            hit = j;
          }
        if (hit < 0) continue;
        std::vector<double> w(J);
        double total = 0.0;
        for (Eigen::Index j = 0; j < J; ++j) {
          w[j] = j == hit ? 0.0 : std::max(0.0, w0[j] + t * sign * v(j));
          total += w[j];
        }
        for (double& x : w) x /= total;
        w_ = w;
        recompute_f();
        if (ll_ > best_ll) {
          best_ll = ll_;
          best_w = w;
        }
      }
      if (best_w.empty()) break;
      w_ = best_w;
      recompute_f();
      prune();
      if (ll_ < ll0) weight_step();
      if (ll_ < ll0 || w_.size() >= static_cast<std::size_t>(J)) {
        atoms_ = atoms0;
        w_ = w0;
        cols_ = cols0;
        f_ = f0;
        ll_ = ll0;
        break;
      }
    }
  }

  void prune() {
    std::vector<char> zero(w_.size(), 0), small(w_.size(), 0);
    bool any_zero = false, any_small = false;
    for (std::size_t j = 0; j < w_.size(); ++j) {
      if (w_[j] == 0.0) zero[j] = any_zero = true;
      else if (w_[j] < kPruneWeight) small[j] = any_small = true;
    }
    if (any_zero) remove_atoms(zero);
    if (!any_small) return;
    std::vector<double> atoms0 = atoms_, w0 = w_, f0 = f_;
    std::vector<std::vector<double>> cols0 = cols_;
    const double ll0 = ll_;
    std::vector<char> drop(w_.size(), 0);
    for (std::size_t j = 0; j < w_.size(); ++j) drop[j] = w_[j] < kPruneWeight;
    remove_atoms(drop);
    const double total = std::accumulate(w_.begin(), w_.end(), 0.0);
    for (double& w : w_) w /= total;
    recompute_f();
    if (ll_ < ll0) {
      atoms_ = std::move(atoms0);
      w_ = std::move(w0);
      cols_ = std::move(cols0);
      f_ = std::move(f0);
      ll_ = ll0;
    }
  }
};

NpmleResult Solver::run() {
  NpmleResult res;
  std::vector<double> start(d_, 0.0);
  for (int l = 0; l < d_; ++l) {
    double m = 0.0;
    for (std::size_t i = 0; i < nu_; ++i) m += count_[i] * x_[i * d_ + l];
    m /= n_;
    if (space_.axis(l).kind == AxisKind::kBinomial) m /= space_.axis(l).trials;
    start[l] = m;
  }
  clamp_to_box(start);
  add_atom(start);
  w_[0] = 1.0;
  recompute_f();
  res.loglik_history.push_back(ll_);

  const double tol = opts_.tol_gradient * n_;
  bool polishing = false;
  int stall = 0;
  std::vector<double> D;
  double gap = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < opts_.max_iters; ++it) {
    D_grid(D);
    const auto maxima = local_maxima(D);
    double sup = *std::max_element(D.begin(), D.end());
    std::vector<std::vector<double>> candidates;
    if (!polishing && sup <= 0.5 * tol) polishing = true;
    if (!polishing) {
      for (std::size_t g : maxima)
        if (D[g] > 0.0) candidates.push_back(grid_point(g));
    } else {
      std::vector<std::vector<double>> centers;
      for (std::size_t g : maxima) centers.push_back(grid_point(g));
      for (std::size_t j = 0; j < w_.size(); ++j) centers.emplace_back(atom(j).begin(), atom(j).end());
      for (auto& c : centers) {
        auto [theta, val] = polish(c);
        sup = std::max(sup, val);
        if (val > 0.0) candidates.push_back(std::move(theta));
      }
    }
    gap = std::max(0.0, sup);
    if (polishing && gap <= tol) {
      res.converged = true;
      break;
    }
    bool added = false;
    for (const auto& c : candidates) added |= add_atom(c);
    const double ll_before = ll_;
    for (int inner = 0; inner < 5; ++inner) {
      const double dd = weight_step();
      if (dd <= 0.1 * tol) break;
    }
    prune();
    reduce_support();
    if (ll_ < ll_before - 1e-12 * (1.0 + std::abs(ll_before)))
      throw std::logic_error("npmle_solve: log-likelihood decreased");
    res.loglik_history.push_back(ll_);
    if (!polishing && !added) polishing = true;
    stall = (ll_ - ll_before <= 1e-15 * (1.0 + std::abs(ll_))) ? stall + 1 : 0;
    if (stall >= 25) break;
  }
  res.iterations = it;
  res.gap_bound = std::isfinite(gap) ? gap : std::numeric_limits<double>::max();
  if (res.converged && w_.size() > nu_)
    throw std::logic_error("npmle_solve: more atoms than distinct observations");
  const double total = std::accumulate(w_.begin(), w_.end(), 0.0);
  std::vector<double> w = w_;
  for (double& v : w) v /= total;
  res.g_hat = MixingMeasure::discrete(d_, atoms_, std::move(w));
  res.loglik = ll_;
  return res;
}

}  // namespace

NpmleResult npmle_solve(const Dataset& data, const ParamSpace& space, const NpmleOptions& opts) {
  if (opts.tol_gradient <= 0.0 || opts.max_iters <= 0 || opts.refine_rounds < 0)
    throw InputError("npmle_solve: options must be positive");
  Solver solver(space, data, opts);
  return solver.run();
}

}  // namespace mixlrt
