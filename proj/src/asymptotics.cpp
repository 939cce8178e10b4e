#include "maxnl/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/kernels.hpp"

namespace maxnl {

std::vector<FieldPair> compute_iterates(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                        double t, int K) {
  if (K < 0) fail(ErrorKind::invalid_argument, "iterate count must be >= 0");
  const FieldPair tU0 = cplx(t) * U0;
  std::vector<FieldPair> out{tU0};
  for (int k = 1; k <= K; ++k) out.push_back(picard_step(op, law, tU0, out.back()));
  return out;
}

std::vector<FieldPair> compute_iterates(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                        const TangentialBoundaryField& f, double t, int K) {
  return compute_iterates(op, law, op.solve_homogeneous(f).first, t, K);
}

SlopeFit fit_loglog(const std::vector<double>& t, const std::vector<double>& y, double max_residual) {
  if (t.size() != y.size() || t.size() < 2) fail(ErrorKind::invalid_argument, "slope fit needs >= 2 matched samples");
  SlopeFit fit{0, 0, 0, t, y};
  if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; }))
    fail(ErrorKind::zero_signal, "zero signal: all norms vanish");
  Eigen::MatrixXd A(t.size(), 2);
  Eigen::VectorXd b(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0) || !(y[i] > 0)) fail(ErrorKind::fit_rejected, "log fit needs positive samples");
    A(i, 0) = std::log(t[i]);
    A(i, 1) = 1.0;
    b(i) = std::log(y[i]);
  }
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  fit.slope = c(0);
  fit.intercept = c(1);
  fit.residual = std::sqrt((A * c - b).squaredNorm() / double(t.size()));
  if (fit.residual > max_residual)
    fail(ErrorKind::fit_rejected,
         fmt::format("log-log fit residual {:.3g} exceeds {:.3g}: not in the asymptotic regime", fit.residual,
                     max_residual));
  return fit;
}

std::vector<double> default_t_values(double t_max, int min_count) {
  if (!(t_max > 0)) fail(ErrorKind::invalid_argument, "t_max must be positive");
  const int count = std::max(8, min_count);
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i) t[i] = t_max * std::pow(30.0, double(i) / (count - 1) - 1.0);
  return t;
}

namespace {

std::vector<double> correction_norms(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                     int k, const std::vector<double>& ts, double p) {
  std::vector<double> out;
  for (double t : ts) {
    const auto it = compute_iterates(op, law, U0, t, k);
    out.push_back(norm_W1p(it[k] - it[k - 1], p));
  }
  return out;
}

std::vector<double> remainder_norms(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                    int k, const std::vector<double>& ts, const AsymptoticsOptions& opt) {
  PicardOptions po;
  po.tol = opt.picard_tol;
  po.p = opt.p;
  po.max_iter = 500;
  std::vector<double> out;
  for (double t : ts) {
    const auto it = compute_iterates(op, law, U0, t, k);
    const PicardState st = solve_nonlinear_from(op, law, cplx(t) * U0, po);
    out.push_back(norm_W1p(st.U - it[k], opt.p));
  }
  return out;
}

}  // namespace

SlopeFit order_fit_V(const LinearMaxwellOperator& op, const NonlinearLaw& law, const TangentialBoundaryField& f, int k,
                     const std::vector<double>& t_values, const AsymptoticsOptions& opt) {
  if (k < 1) fail(ErrorKind::invalid_argument, "corrections start at k = 1");
  const FieldPair U0 = op.solve_homogeneous(f).first;
  return fit_loglog(t_values, correction_norms(op, law, U0, k, t_values, opt.p), opt.max_fit_residual);
}

SlopeFit order_fit_remainder(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                             const TangentialBoundaryField& f, int k, const std::vector<double>& t_values,
                             const AsymptoticsOptions& opt) {
  if (k < 0) fail(ErrorKind::invalid_argument, "k must be >= 0");
  const FieldPair U0 = op.solve_homogeneous(f).first;
  return fit_loglog(t_values, remainder_norms(op, law, U0, k, t_values, opt), opt.max_fit_residual);
}

FieldPair extract_W_k(const LinearMaxwellOperator& op, const NonlinearLaw& law, const TangentialBoundaryField& f, int k,
                      const std::vector<double>& t_values, int iterate) {
  if (k < 0) fail(ErrorKind::invalid_argument, "k must be >= 0");
  if (iterate < 0) iterate = k;
  std::set<double> distinct(t_values.begin(), t_values.end());
  if (int(distinct.size()) < 2 * k + 2)
    fail(ErrorKind::fit_rejected, fmt::format("need {} distinct t values, got {}", 2 * k + 2, distinct.size()));
  const FieldPair U0 = op.solve_homogeneous(f).first;
  if (k == 0) return U0;
  // The t^1 term of every iterate is exactly t U0; fit the remainder with
  // odd powers t^3 .. t^{2(k+2)+1}.
  const int nt = int(t_values.size());
  const int nb = std::min(nt, k + 2);
  double t_max = 0;
  for (double t : t_values) t_max = std::max(t_max, std::abs(t));
  Eigen::MatrixXd A(nt, nb);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nb; ++j) A(i, j) = std::pow(t_values[i] / t_max, 2 * j + 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) < 1e-12 * sv(0)) fail(ErrorKind::fit_rejected, "odd polynomial fit is ill-conditioned");
  // Row k-1 of the pseudo-inverse gives the fit weights of the t^{2k+1} coefficient.
  const Eigen::MatrixXd pinv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  FieldPair W(op.grid());
  for (int i = 0; i < nt; ++i) {
    const auto it = compute_iterates(op, law, U0, t_values[i], iterate);
    W.axpy(pinv(k - 1, i), it[iterate] - cplx(t_values[i]) * U0);
  }
  W *= 1.0 / std::pow(t_max, 2 * k + 1);
  return W;
}

namespace {

using Entrywise = std::array<std::vector<double>, 3>;

Entrywise intensity_of(const VectorField3C& v) {
  Entrywise out;
  for (int c = 0; c < 3; ++c) out[c].resize(v.comp(c).size());
  kernels::omp::intensity(v.grid().n(), v.layout() == Layout::edge ? 0 : 1,
                          {v.comp(0).data(), v.comp(1).data(), v.comp(2).data()}, out[0].data(), out[1].data(),
                          out[2].data());
  return out;
}

// Real bilinear form S with S(v, v) = intensity(v).
Entrywise intensity_pair(const VectorField3C& a, const VectorField3C& b) {
  Entrywise p = intensity_of(a + b);
  const Entrywise q = intensity_of(a - b);
  for (int c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < p[c].size(); ++m) p[c][m] = 0.25 * (p[c][m] - q[c][m]);
  return p;
}

// a_j (j = 1..K) at every entry of the layout the susceptibility acts on.
std::vector<std::array<std::vector<cplx>, 3>> order_samples(const Susceptibility& sus, const StaggeredSamples& strength,
                                                            const StaggeredSamples& sat,
                                                            const std::vector<StaggeredSamples>& series, int k_max,
                                                            const VectorField3C& like, int K) {
  std::vector<std::array<std::vector<cplx>, 3>> out(K + 1);
  for (int j = 1; j <= K; ++j)
    for (int c = 0; c < 3; ++c) {
      auto& dst = out[j][c];
      dst.assign(like.comp(c).size(), 0.0);
      if (sus.is_zero() || j > k_max) continue;
      for (std::size_t m = 0; m < dst.size(); ++m) {
        switch (sus.form) {
          case ClosedForm::kerr: dst[m] = j == 1 ? strength.comp[c][m] : 0.0; break;
          case ClosedForm::saturable:
            dst[m] = strength.comp[c][m] * std::pow(-sat.comp[c][m], j - 1);
            break;
          case ClosedForm::none: dst[m] = j <= int(series.size()) ? series[j - 1].comp[c][m] : 0.0; break;
        }
      }
    }
  return out;
}

}  // namespace

std::vector<FieldPair> expansion_fields(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                        int K) {
  if (K < 0) fail(ErrorKind::invalid_argument, "expansion order must be >= 0");
  std::vector<FieldPair> W{U0};
  if (K == 0) return W;
  const auto& smp = law.on_grid(op.grid());
  const auto aX = order_samples(law.X(), smp.x_strength, smp.x_saturation, smp.x_series, law.k_max(), U0.E, K);
  const auto aY = order_samples(law.Y(), smp.y_strength, smp.y_saturation, smp.y_series, law.k_max(), U0.H, K);
  // sE[q], sH[q]: coefficient of t^{2q+2} in the intensity of U^t.
  std::vector<Entrywise> sE, sH;
  for (int k = 1; k <= K; ++k) {
    const int q = k - 1;
    auto accumulate = [&](auto field_of) {
      Entrywise s;
      for (int l = 0; 2 * l <= q; ++l) {
        const int m = q - l;
        Entrywise part = l == m ? intensity_of(field_of(W[l])) : intensity_pair(field_of(W[l]), field_of(W[m]));
        const double w = l == m ? 1.0 : 2.0;
        for (int c = 0; c < 3; ++c) {
          if (s[c].empty()) s[c].assign(part[c].size(), 0.0);
          for (std::size_t e = 0; e < part[c].size(); ++e) s[c][e] += w * part[c][e];
        }
      }
      return s;
    };
    sE.push_back(accumulate([](const FieldPair& f) -> const VectorField3C& { return f.E; }));
    sH.push_back(accumulate([](const FieldPair& f) -> const VectorField3C& { return f.H; }));

    FieldPair rhs(op.grid());
    auto side = [&](const std::vector<Entrywise>& s, const auto& coef, double sign, auto field_of, VectorField3C& dst) {
      for (int c = 0; c < 3; ++c) {
        auto out = dst.comp(c);
        const std::size_t count = out.size();
#pragma omp parallel for schedule(static)
        for (std::size_t e = 0; e < count; ++e) {
          // Powers of s(u) = sum_q s_q u^{q+1}, truncated at u^k.
          std::vector<double> base(k + 1, 0.0), pw(k + 1, 0.0), next(k + 1);
          for (int qq = 0; qq < k; ++qq) base[qq + 1] = s[qq][c][e];
          pw[0] = 1.0;
          cplx acc = 0.0;
          for (int j = 1; j <= k; ++j) {
            std::fill(next.begin(), next.end(), 0.0);
            for (int a = 0; a <= k; ++a)
              if (pw[a] != 0.0)
                for (int b = 1; a + b <= k; ++b) next[a + b] += pw[a] * base[b];
            pw.swap(next);
            const cplx aj = coef[j][c][e];
            if (aj == 0.0) continue;
            cplx sum = 0.0;
            for (int l = 0; l + j <= k; ++l) sum += pw[k - l] * field_of(W[l]).comp(c)[e];
            acc += aj * sum;
          }
          out[e] = sign * acc;
        }
      }
    };
    side(sE, aX, -1.0, [](const FieldPair& f) -> const VectorField3C& { return f.E; }, rhs.E);
    side(sH, aY, 1.0, [](const FieldPair& f) -> const VectorField3C& { return f.H; }, rhs.H);
    W.push_back(op.solve_inhomogeneous(rhs).first);
  }
  return W;
}

double wk_equation_residual(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& W1,
                            const FieldPair& U0) {
  FieldPair rhs = eval_F_k(law, 1, U0);
  const auto& bmap = BoundaryEdgeMap::get(op.grid());
  for (const auto& be : bmap->edges()) rhs.E.comp(be.c)[be.flat] = 0.0;
  const FieldPair r = op.apply(W1) - rhs;
  const double trace = norm_Linf(tangential_trace(W1.E));
  const double scale = norm_Linf(rhs);
  if (scale == 0.0) return norm_Linf(r) + trace;
  return std::max(norm_Linf(r), trace) / scale;
}

std::string ExpansionRecord::to_json() const {
  auto fit_json = [](const SlopeFit& f) {
    return nlohmann::json{{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}};
  };
  nlohmann::json j{{"k", k},
                   {"t_values", t_values},
                   {"correction_norms", correction_norms},
                   {"remainder_norms", remainder_norms},
                   {"correction_fit", fit_json(correction_fit)},
                   {"remainder_fit", fit_json(remainder_fit)},
                   {"expected_correction_slope", 2 * k + 1},
                   {"expected_remainder_slope", 2 * k + 3}};
  return j.dump(2);
}

void ExpansionRecord::write_csv(const std::string& path, const std::string& tag) const {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  if (!tag.empty()) os << "# " << tag << "\n";
  os << "t,correction_norm,remainder_norm\n";
  for (std::size_t i = 0; i < t_values.size(); ++i)
    os << fmt::format("{:.17g},{:.17g},{:.17g}\n", t_values[i], i < correction_norms.size() ? correction_norms[i] : 0.0,
                      i < remainder_norms.size() ? remainder_norms[i] : 0.0);
}

ExpansionRecord expansion_record(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                 const TangentialBoundaryField& f, int k, const std::vector<double>& t_values,
                                 const AsymptoticsOptions& opt) {
  if (k < 1) fail(ErrorKind::invalid_argument, "expansion records start at k = 1");
  const FieldPair U0 = op.solve_homogeneous(f).first;
  ExpansionRecord rec{k, t_values, {}, {}, {}, {}, FieldPair(op.grid())};
  rec.correction_norms = correction_norms(op, law, U0, k, t_values, opt.p);
  rec.remainder_norms = remainder_norms(op, law, U0, k, t_values, opt);
  rec.correction_fit = fit_loglog(t_values, rec.correction_norms, opt.max_fit_residual);
  rec.remainder_fit = fit_loglog(t_values, rec.remainder_norms, opt.max_fit_residual);
  rec.W_k = extract_W_k(op, law, f, k, t_values);
  return rec;
}

}  // namespace maxnl
