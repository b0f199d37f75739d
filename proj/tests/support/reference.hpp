#pragma once

// Dense re-derivations of the structural pipeline and the attention layers,
// written loop by loop against the parameter store.

#include <cmath>
#include <string>

#include "nogat/attention.hpp"
#include "toy.hpp"

namespace reference {

using toy::Dense;
using nogat::Index;

/// h_i = f_node(sum_j f_edge(A_norm_ij)) over stored neighbours j.
inline std::vector<double> struct_features(const nogat::ad::ParamStore& p, const std::string& prefix,
                                           const Dense& an, Index edge_width) {
  const Index n = static_cast<Index>(an.size());
  std::vector<double> h(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::vector<double> pooled(static_cast<std::size_t>(edge_width), 0.0);
    for (Index j = 0; j < n; ++j) {
      if (an[i][j] == 0.0) continue;
      auto e = toy::mlp_eval(p, prefix + ".f_edge", 2, {an[i][j]});
      for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += e[k];
    }
    h[static_cast<std::size_t>(i)] = toy::mlp_eval(p, prefix + ".f_node", 2, pooled)[0];
  }
  return h;
}

/// Z_ij = scale(M_ij h_j) where M = sum_l xi^{l-1} A_norm^l is positive.
inline Dense overlay(const nogat::ad::ParamStore& p, const std::string& prefix, const Dense& an,
                     const std::vector<double>& h, int hops, double xi, std::size_t scale_depth) {
  const Index n = static_cast<Index>(an.size());
  Dense m = an, power = an;
  double w = 1.0;
  for (int l = 2; l <= hops; ++l) {
    power = toy::matmul(power, an);
    w *= xi;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) m[i][j] += w * power[i][j];
  }
  Dense z = toy::zeros(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (m[i][j] > 0.0)
        z[i][j] = toy::mlp_eval(p, prefix + ".scale", scale_depth, {m[i][j] * h[static_cast<std::size_t>(j)]})[0];
  return z;
}

/// Z Z^T.
inline Dense gram(const Dense& z) {
  const std::size_t n = z.size();
  Dense c = toy::zeros(static_cast<Index>(n), static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < z[i].size(); ++k) c[i][j] += z[i][k] * z[j][k];
  return c;
}

inline Dense matrix_of(const nogat::Matrix& m) {
  Dense d = toy::zeros(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  return d;
}

struct LayerOut {
  Dense out;    // N x K*F' (before head merge)
  Dense alpha;  // per head, N x N dense, zero off the neighbourhood
};

/// One attention layer on input x (N x in) over neighbourhoods nb (with
/// self-loops). `corr` is the dense C matrix, ignored when !combined.
inline LayerOut layer(const nogat::ad::ParamStore& p, const std::string& prefix, const Dense& x,
                      const Dense& nb, const Dense& corr, Index heads, Index width, bool combined,
                      double slope = 0.2) {
  const Index n = static_cast<Index>(x.size());
  const Dense w = matrix_of(p.at(prefix + ".weight").value);
  const Dense wh = toy::matmul(x, w);
  const auto& as = p.at(prefix + ".att_src").value;
  const auto& ad = p.at(prefix + ".att_dst").value;
  LayerOut r;
  r.out = toy::zeros(n, heads * width);
  r.alpha = toy::zeros(n, n * heads);
  for (Index k = 0; k < heads; ++k) {
    double pm = 1.0, qn = 0.0, eps = 0.0;
    if (combined) {
      const double gm = p.at(prefix + ".g_m").value(0, k), gn = p.at(prefix + ".g_n").value(0, k);
      pm = 1.0 / (1.0 + std::exp(-(gm - gn)));
      qn = 1.0 / (1.0 + std::exp(-(gn - gm)));
      eps = p.at(prefix + ".eps").value(0, 0);
    }
    for (Index i = 0; i < n; ++i) {
      std::vector<double> e(static_cast<std::size_t>(n), -INFINITY), c(static_cast<std::size_t>(n), -INFINITY);
      double emax = -INFINITY, cmax = -INFINITY;
      Index size = 0;
      for (Index j = 0; j < n; ++j) {
        if (nb[i][j] == 0.0) continue;
        ++size;
        double s = 0.0;
        for (Index f = 0; f < width; ++f)
          s += as(k, f) * wh[i][k * width + f] + ad(k, f) * wh[j][k * width + f];
        e[j] = s > 0 ? s : slope * s;
        c[j] = corr.empty() ? 0.0 : corr[i][j];
        emax = std::max(emax, e[j]);
        cmax = std::max(cmax, c[j]);
      }
      double ze = 0.0, zc = 0.0;
      for (Index j = 0; j < n; ++j)
        if (nb[i][j] != 0.0) {
          ze += std::exp(e[j] - emax);
          zc += std::exp(c[j] - cmax);
        }
      for (Index j = 0; j < n; ++j) {
        if (nb[i][j] == 0.0) continue;
        const double m = std::exp(e[j] - emax) / ze;
        const double a = combined ? pm * m + qn * std::exp(c[j] - cmax) / zc : m;
        r.alpha[i][j * heads + k] = a;
        for (Index f = 0; f < width; ++f) r.out[i][k * width + f] += a * wh[j][k * width + f];
      }
      if (combined)
        for (Index f = 0; f < width; ++f)
          r.out[i][k * width + f] += eps / static_cast<double>(size) * wh[i][k * width + f];
    }
  }
  return r;
}

}  // namespace reference
