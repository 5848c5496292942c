#pragma once

// Decision-boundary rendering for two-dimensional inputs. sign(F) is
// rasterized on a vertex grid; the zero level set is traced cell by cell
// (marching squares), and every traced segment endpoint sits on a grid edge
// whose two vertices have opposite signs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/dataset.hpp"
#include "sgdlab/mlp.hpp"
#include "sgdlab/svg_plot.hpp"

namespace sgdlab {

using Predictor2d = std::function<double(double, double)>;
using InputGradient2d = std::function<Eigen::Vector2d(double, double)>;

struct BoundaryOptions {
  int resolution = 120;           // vertices per axis
  double extent = 0.0;            // half-width of the square view; 0 picks one from the data
  bool arrows = false;            // draw d_x F at boundary points
  int max_arrows = 16;
  std::string title;
};

struct BoundarySegment {
  Eigen::Vector2d a, b;
  // Vertex values bracketing each endpoint; opposite signs by construction.
  double fa_lo, fa_hi, fb_lo, fb_hi;
};

struct BoundaryRender {
  std::string svg;
  std::vector<BoundarySegment> segments;
  double extent = 0.0;

  /// Every segment endpoint lies on an edge with a sign change of F.
  bool certified() const {
    for (const auto& s : segments)
      if (!(s.fa_lo * s.fa_hi < 0.0 || (s.fa_lo == 0.0) != (s.fa_hi == 0.0)) ||
          !(s.fb_lo * s.fb_hi < 0.0 || (s.fb_lo == 0.0) != (s.fb_hi == 0.0)))
        return false;
    return true;
  }
};

inline BoundaryRender render_boundary_2d(const Predictor2d& F, const Dataset& ds, const BoundaryOptions& opt = {},
                                         const InputGradient2d& grad = {}) {
  if (ds.dim() != 2) throw std::invalid_argument("render_boundary_2d: requires d = 2, got d = " + std::to_string(ds.dim()));
  if (opt.resolution < 2) throw std::invalid_argument("render_boundary_2d: resolution must be >= 2");
  BoundaryRender out;
  double ext = opt.extent;
  if (!(ext > 0.0)) {
    ext = 1.0;
    for (Eigen::Index i = 0; i < ds.points.rows(); ++i) ext = std::max(ext, ds.points.row(i).cwiseAbs().maxCoeff());
    ext *= 1.1;
  }
  out.extent = ext;
  const int n = opt.resolution;
  const double h = 2.0 * ext / (n - 1);
  auto coord = [&](int i) { return -ext + h * i; };
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  auto at = [&](int i, int j) -> double& { return v[static_cast<std::size_t>(j) * n + i]; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) at(i, j) = F(coord(i), coord(j));

  auto crosses = [](double a, double b) { return (a > 0.0) != (b > 0.0); };
  auto interp = [&](int i0, int j0, int i1, int j1) {
    const double a = at(i0, j0), b = at(i1, j1);
    const double t = (a == b) ? 0.5 : std::clamp(a / (a - b), 0.0, 1.0);
    return Eigen::Vector2d(coord(i0) + t * (coord(i1) - coord(i0)), coord(j0) + t * (coord(j1) - coord(j0)));
  };
  struct EdgeHit {
    Eigen::Vector2d p;
    double lo, hi;
  };
  for (int j = 0; j + 1 < n; ++j)
    for (int i = 0; i + 1 < n; ++i) {
      const int corners[4][2] = {{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}};
      std::vector<EdgeHit> hits;
      for (int e = 0; e < 4; ++e) {
        const auto* c0 = corners[e];
        const auto* c1 = corners[(e + 1) % 4];
        if (crosses(at(c0[0], c0[1]), at(c1[0], c1[1])))
          hits.push_back({interp(c0[0], c0[1], c1[0], c1[1]), at(c0[0], c0[1]), at(c1[0], c1[1])});
      }
      // Two hits: one segment. Four (saddle): pair edges (0,1) and (2,3).
      for (std::size_t k = 0; k + 1 < hits.size(); k += 2)
        out.segments.push_back({hits[k].p, hits[k + 1].p, hits[k].lo, hits[k].hi, hits[k + 1].lo, hits[k + 1].hi});
    }

  constexpr double S = 480, M = 30;
  const double scale = S / (2.0 * ext);
  auto sx = [&](double x) { return M + (x + ext) * scale; };
  auto sy = [&](double y) { return M + (ext - y) * scale; };
  using detail::fmt;
  const char* cf = "%.2f";
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << S + 2 * M << "\" height=\"" << S + 2 * M
    << "\" viewBox=\"0 0 " << S + 2 * M << ' ' << S + 2 * M << "\">\n";
  s << "<!-- extent=" << fmt(ext) << " resolution=" << n << " segments=" << out.segments.size() << " -->\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g class=\"raster\" shape-rendering=\"crispEdges\">\n";
  // Each vertex owns the square of side h centered on it.
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      s << "<rect x=\"" << fmt(sx(coord(i) - h / 2), cf) << "\" y=\"" << fmt(sy(coord(j) + h / 2), cf)
        << "\" width=\"" << fmt(h * scale, cf) << "\" height=\"" << fmt(h * scale, cf) << "\" fill=\""
        << (at(i, j) > 0.0 ? "#fde0dd" : "#deebf7") << "\"/>\n";
  s << "</g>\n";
  s << "<line class=\"true-boundary\" x1=\"" << fmt(sx(0), cf) << "\" y1=\"" << fmt(sy(ext), cf) << "\" x2=\""
    << fmt(sx(0), cf) << "\" y2=\"" << fmt(sy(-ext), cf) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  s << "<g class=\"model-boundary\" stroke=\"#333\" stroke-width=\"2\">\n";
  for (const auto& g : out.segments)
    s << "<line x1=\"" << fmt(sx(g.a.x()), cf) << "\" y1=\"" << fmt(sy(g.a.y()), cf) << "\" x2=\""
      << fmt(sx(g.b.x()), cf) << "\" y2=\"" << fmt(sy(g.b.y()), cf) << "\"/>\n";
  s << "</g>\n<g class=\"points\">\n";
  for (Eigen::Index i = 0; i < ds.points.rows(); ++i)
    s << "<circle cx=\"" << fmt(sx(ds.points(i, 0)), cf) << "\" cy=\"" << fmt(sy(ds.points(i, 1)), cf)
      << "\" r=\"3\" fill=\"" << (ds.labels(i) > 0 ? "#d62728" : "#1f77b4") << "\"/>\n";
  s << "</g>\n";
  if (opt.arrows && grad && !out.segments.empty()) {
    s << "<g class=\"arrows\" stroke=\"#2ca02c\" stroke-width=\"1.5\">\n";
    const std::size_t stride = std::max<std::size_t>(1, out.segments.size() / std::max(1, opt.max_arrows));
    for (std::size_t k = 0; k < out.segments.size(); k += stride) {
      const Eigen::Vector2d p = 0.5 * (out.segments[k].a + out.segments[k].b);
      Eigen::Vector2d g = grad(p.x(), p.y());
      if (!(g.norm() > 0.0)) continue;
      g *= 0.12 * ext / g.norm();
      s << "<line x1=\"" << fmt(sx(p.x()), cf) << "\" y1=\"" << fmt(sy(p.y()), cf) << "\" x2=\""
        << fmt(sx(p.x() + g.x()), cf) << "\" y2=\"" << fmt(sy(p.y() + g.y()), cf) << "\"/>\n";
    }
    s << "</g>\n";
  }
  if (!opt.title.empty())
    s << "<text x=\"" << (S + 2 * M) / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << detail::xml_escape(opt.title) << "</text>\n";
  s << "</svg>\n";
  out.svg = s.str();
  return out;
}

inline BoundaryRender render_boundary_2d(const Vector& w, const Dataset& ds, const BoundaryOptions& opt = {}) {
  if (w.size() != 2 || ds.dim() != 2) throw std::invalid_argument("render_boundary_2d: requires d = 2");
  const double k = 1.0 / std::sqrt(2.0);
  return render_boundary_2d([&](double x, double y) { return k * (w(0) * x + w(1) * y); }, ds, opt,
                            [&](double, double) { return Eigen::Vector2d(k * w(0), k * w(1)); });
}

inline BoundaryRender render_boundary_2d(const MlpState& m, const Dataset& ds, const BoundaryOptions& opt = {}) {
  if (ds.dim() != 2 || m.layers().front().cols() != 2) throw std::invalid_argument("render_boundary_2d: requires d = 2");
  return render_boundary_2d([&](double x, double y) { return centered_predictor(m, Vector(Eigen::Vector2d(x, y))); },
                            ds, opt, [&](double x, double y) {
                              return Eigen::Vector2d(input_gradient(m, Vector(Eigen::Vector2d(x, y))));
                            });
}

}  // namespace sgdlab
