// SPDX-License-Identifier: Apache-2.0
//
// Procedural labeled grape bunches built from surface-sampled primitives:
//
//   hook      circular-arc tube at the top
//   peduncle  straight cylinder below the hook
//   rachis    gently curved cylinder continuing downward
//   twigs     tubes branching off the rachis
//   sub-twigs thinner tubes branching off twigs
//   berries   spheres at twig and sub-twig tips
//
// Points that fall inside another primitive's solid are removed, so the
// cloud samples the outer surface of the union. z points up, units are mm.

#ifndef MVLABEL_SYNTH_HPP
#define MVLABEL_SYNTH_HPP

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mvlabel/camera.hpp"
#include "mvlabel/cloud.hpp"
#include "mvlabel/error.hpp"
#include "mvlabel/random.hpp"

namespace mvlabel {

struct BunchColors {
  Rgb peduncle{112, 78, 38};
  Rgb rachis{84, 140, 46};
  Rgb berries{72, 28, 96};
  Rgb twigs{160, 200, 60};
  Rgb hook{180, 180, 190};
  Rgb sub_twigs{214, 150, 92};

  /// Every stem class shares one brown; only useful for qualitative study.
  static BunchColors hard_mode() {
    BunchColors c;
    c.peduncle = c.rachis = c.twigs = c.sub_twigs = Rgb{120, 88, 52};
    return c;
  }
};

struct BunchParams {
  std::uint64_t seed = 0;
  double target_radius = kReferenceBunchRadius;
  int n_twigs = 12;
  int sub_twigs_min = 1, sub_twigs_max = 3;
  double berry_radius_min = 5.0, berry_radius_max = 8.0;
  double sample_spacing = 0.8;
  bool with_berries = true;
  bool six_class = false;
  double color_noise = 8.0 / 255.0;  // per-channel std on the [0,1] scale
  BunchColors colors;

  static constexpr double kHookArcRadius = 10.0;
  static constexpr double kHookTubeRadius = 1.5;
  static constexpr double kPeduncleRadius = 2.5;
  static constexpr double kPeduncleLength = 30.0;
  static constexpr double kRachisRadius = 2.0;
  static constexpr double kTwigRadius = 1.0;
  static constexpr double kTwigLengthMin = 15.0, kTwigLengthMax = 40.0;
  static constexpr double kSubTwigRadius = 0.7;
  static constexpr double kSubTwigLengthMin = 5.0, kSubTwigLengthMax = 15.0;

  void validate() const {
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw ParameterError(std::string("BunchParams: ") + msg);
    };
    require(target_radius > 0.0, "target_radius must be > 0");
    require(n_twigs >= 1, "n_twigs must be >= 1");
    require(sub_twigs_min >= 0 && sub_twigs_min <= sub_twigs_max, "bad sub-twig range");
    require(berry_radius_min > 0.0 && berry_radius_min <= berry_radius_max, "bad berry radius range");
    require(sample_spacing > 0.0, "sample_spacing must be > 0");
    // Tubes need a few samples around their circumference.
    require(sample_spacing <= 2.0 * kSubTwigRadius, "sample_spacing exceeds the thinnest tube diameter");
    require(color_noise >= 0.0, "color_noise must be >= 0");
  }
};

namespace synth_detail {

enum class Part { hook, peduncle, rachis, twig, sub_twig, berry };

/// Solid used for interior culling: a tube along a polyline or a sphere.
struct Primitive {
  Part part;
  std::vector<Vec3d> centerline;  // tubes only
  double radius = 0.0;
  Vec3d center = Vec3d::Zero();  // spheres and the bounding sphere of tubes
  double bound = 0.0;            // bounding sphere radius
  bool sphere = false;

  void finish_bounds() {
    if (sphere) {
      bound = radius;
      return;
    }
    Vec3d lo = centerline.front(), hi = lo;
    for (const auto& p : centerline) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    center = 0.5 * (lo + hi);
    bound = 0.0;
    for (const auto& p : centerline) bound = std::max(bound, (p - center).norm());
    bound += radius;
  }

  /// Strictly inside the solid. Tube ends are open (finite cylinders per segment).
  bool contains(const Vec3d& p, double margin) const {
    if ((p - center).squaredNorm() >= bound * bound) return false;
    if (sphere) return (p - center).norm() < radius - margin;
    const double r = radius - margin;
    if (r <= 0.0) return false;
    for (std::size_t i = 0; i + 1 < centerline.size(); ++i) {
      const Vec3d a = centerline[i], ab = centerline[i + 1] - a;
      const double len2 = ab.squaredNorm();
      if (len2 == 0.0) continue;
      const double t = (p - a).dot(ab) / len2;
      if (t < 0.0 || t > 1.0) continue;
      if ((p - (a + t * ab)).squaredNorm() < r * r) return true;
    }
    return false;
  }
};

inline Vec3d any_perpendicular(const Vec3d& t) {
  const Vec3d ref = std::abs(t.z()) < 0.9 ? Vec3d::UnitZ() : Vec3d::UnitX();
  return t.cross(ref).normalized();
}

/// Resample a polyline at roughly uniform arc length.
struct ArcCurve {
  std::vector<Vec3d> pts;
  std::vector<double> cum;

  explicit ArcCurve(std::vector<Vec3d> p) : pts(std::move(p)) {
    cum.assign(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  double length() const { return cum.back(); }

  Vec3d at(double s, Vec3d* tangent) const {
    s = std::clamp(s, 0.0, length());
    std::size_t i = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin());
    i = std::clamp<std::size_t>(i, 1, pts.size() - 1);
    const double seg = cum[i] - cum[i - 1];
    const double u = seg > 0 ? (s - cum[i - 1]) / seg : 0.0;
    if (tangent) *tangent = (pts[i] - pts[i - 1]).normalized();
    return pts[i - 1] + u * (pts[i] - pts[i - 1]);
  }
};

/// Hexagonally staggered rings along the centerline, parallel-transported frame.
inline void sample_tube(const ArcCurve& curve, double radius, double spacing, double phase,
                        std::vector<Vec3d>& out) {
  const double ring_step = spacing * std::sqrt(3.0) / 2.0;
  const double len = curve.length();
  const auto rings = static_cast<int>(std::max(2.0, std::ceil(len / ring_step) + 1));
  const auto m = static_cast<int>(std::max(3.0, std::ceil(2.0 * std::numbers::pi * radius / spacing)));
  Vec3d tangent;
  curve.at(0.0, &tangent);
  Vec3d normal = any_perpendicular(tangent);
  for (int j = 0; j < rings; ++j) {
    const double s = len * j / (rings - 1);
    const Vec3d c = curve.at(s, &tangent);
    normal = (normal - normal.dot(tangent) * tangent).normalized();
    const Vec3d binormal = tangent.cross(normal);
    const double offset = phase + (j % 2) * std::numbers::pi / m;
    for (int k = 0; k < m; ++k) {
      const double a = offset + 2.0 * std::numbers::pi * k / m;
      out.push_back(c + radius * (std::cos(a) * normal + std::sin(a) * binormal));
    }
  }
}

/// Fibonacci lattice at hexagonal density, randomly rotated.
inline void sample_sphere(const Vec3d& center, double radius, double spacing, Rng& rng,
                          std::vector<Vec3d>& out) {
  const double area = 4.0 * std::numbers::pi * radius * radius;
  const auto n = static_cast<int>(std::max(12.0, std::round(area / (spacing * spacing * std::sqrt(3.0) / 2.0))));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const Eigen::Quaterniond q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
  const Eigen::Matrix3d rot = q.toRotationMatrix();
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    out.push_back(center + radius * (rot * Vec3d(r * std::cos(phi), r * std::sin(phi), z)));
  }
}

inline std::vector<Vec3d> straight(const Vec3d& a, const Vec3d& b, int segments = 8) {
  std::vector<Vec3d> pts;
  for (int i = 0; i <= segments; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / segments));
  return pts;
}

/// Rotate `dir` away from itself by `angle` about a perpendicular picked by `spin`.
inline Vec3d deflect(const Vec3d& dir, double angle, double spin) {
  const Vec3d p = any_perpendicular(dir);
  const Vec3d axis = Eigen::AngleAxisd(spin, dir) * p;
  return (Eigen::AngleAxisd(angle, axis) * dir).normalized();
}

}  // namespace synth_detail

struct GeneratedBunch {
  PointCloud cloud;
  std::vector<synth_detail::Primitive> primitives;
  /// Generating primitive of each point.
  std::vector<std::uint32_t> primitive_of;
};

/// Fully labeled cloud with the five- or six-class scheme attached, plus the
/// primitives it was sampled from.
inline GeneratedBunch build_bunch(const BunchParams& params) {
  using namespace synth_detail;
  params.validate();
  Rng rng(mix_seed(params.seed, kStreamSynth));
  const double s = params.sample_spacing;
  const double R = params.target_radius;
  std::vector<Primitive> prims;

  // Origin at the peduncle/rachis junction.
  {
    // Arc in the x-z plane, open toward +x, meeting the peduncle top.
    const Vec3d top(0, 0, BunchParams::kPeduncleLength);
    const Vec3d c = top + Vec3d(0, 0, BunchParams::kHookArcRadius);
    std::vector<Vec3d> arc;
    const int segs = 48;
    for (int i = 0; i <= segs; ++i) {
      const double a = -std::numbers::pi / 2 - 1.5 * std::numbers::pi * i / segs;
      arc.push_back(c + BunchParams::kHookArcRadius * Vec3d(std::cos(a), 0.0, std::sin(a)));
    }
    prims.push_back({Part::hook, arc, BunchParams::kHookTubeRadius});
  }
  prims.push_back({Part::peduncle, straight({0, 0, BunchParams::kPeduncleLength}, {0, 0, 0}),
                   BunchParams::kPeduncleRadius});

  const double rachis_len = 0.9 * R;
  const double bend = 0.06 * rachis_len;
  const double bend_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<Vec3d> rachis;
  const int rachis_segs = 32;
  for (int i = 0; i <= rachis_segs; ++i) {
    const double t = static_cast<double>(i) / rachis_segs;
    const double off = bend * std::sin(std::numbers::pi * t);
    rachis.push_back({off * std::cos(bend_dir), off * std::sin(bend_dir), -rachis_len * t});
  }
  prims.push_back({Part::rachis, rachis, BunchParams::kRachisRadius});
  const ArcCurve rachis_curve(rachis);

  std::vector<Vec3d> tips;  // berry attachment points with outward direction
  std::vector<Vec3d> tip_dirs;
  auto twig = [&](Part part, const Vec3d& base, const Vec3d& dir, double len, double radius) {
    const Vec3d droop(0, 0, -0.08 * len);
    std::vector<Vec3d> pts;
    const int segs = 10;
    for (int i = 0; i <= segs; ++i) {
      const double t = static_cast<double>(i) / segs;
      pts.push_back(base + dir * (len * t) + droop * (t * t));
    }
    prims.push_back({part, pts, radius});
    tips.push_back(pts.back());
    tip_dirs.push_back((pts.back() - pts[segs - 1]).normalized());
    return pts;
  };

  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < params.n_twigs; ++i) {
    const double t = 0.03 + 0.82 * (i + 0.5) / params.n_twigs;
    Vec3d axis;
    const Vec3d on_axis = rachis_curve.at(t * rachis_curve.length(), &axis);
    const double az = i * golden + rng.uniform(-0.3, 0.3);
    const Vec3d radial(std::cos(az), std::sin(az), 0.0);
    const double down = rng.uniform(0.1, 0.5);  // radians below horizontal
    const Vec3d dir = (std::cos(down) * radial + Vec3d(0, 0, -std::sin(down))).normalized();
    // Longer twigs near the top give the tapered bunch outline.
    const double len = std::clamp(BunchParams::kTwigLengthMax -
                                      (BunchParams::kTwigLengthMax - BunchParams::kTwigLengthMin) * t +
                                      rng.uniform(-4.0, 4.0),
                                  BunchParams::kTwigLengthMin, BunchParams::kTwigLengthMax);
    const Vec3d base = on_axis + radial * BunchParams::kRachisRadius;
    const auto twig_pts = twig(Part::twig, base, dir, len, BunchParams::kTwigRadius);
    const ArcCurve twig_curve(twig_pts);

    const int n_sub = params.sub_twigs_min +
                      static_cast<int>(rng.index(static_cast<std::uint64_t>(params.sub_twigs_max - params.sub_twigs_min + 1)));
    for (int k = 0; k < n_sub; ++k) {
      const double u = rng.uniform(0.3, 0.8);
      Vec3d tdir;
      const Vec3d at = twig_curve.at(u * twig_curve.length(), &tdir);
      const Vec3d sdir = deflect(tdir, rng.uniform(0.6, 1.05),
                                 2.0 * std::numbers::pi * (k + rng.uniform(0.0, 0.5)) / std::max(n_sub, 1));
      const Vec3d side = (sdir - sdir.dot(tdir) * tdir).normalized();
      twig(Part::sub_twig, at + side * BunchParams::kTwigRadius, sdir,
           rng.uniform(BunchParams::kSubTwigLengthMin, BunchParams::kSubTwigLengthMax),
           BunchParams::kSubTwigRadius);
    }
  }

  if (params.with_berries) {
    for (std::size_t i = 0; i < tips.size(); ++i) {
      const double r = rng.uniform(params.berry_radius_min, params.berry_radius_max);
      Primitive berry{Part::berry, {}, r};
      berry.sphere = true;
      berry.center = tips[i] + tip_dirs[i] * r;
      prims.push_back(berry);
    }
  }
  for (auto& p : prims) p.finish_bounds();

  const LabelScheme scheme = params.six_class ? LabelScheme::six_class() : LabelScheme::five_class();
  auto label_of = [&](Part part) -> ClassId {
    switch (part) {
      case Part::hook: return scheme.id_of("hook");
      case Part::peduncle: return scheme.id_of("peduncle");
      case Part::rachis: return scheme.id_of("rachis");
      case Part::twig: return scheme.id_of("twigs");
      case Part::sub_twig: return params.six_class ? scheme.id_of("sub_twigs") : scheme.id_of("twigs");
      case Part::berry: return scheme.id_of("berries");
    }
    return 0;
  };
  auto color_of = [&](Part part) -> Rgb {
    const auto& c = params.colors;
    switch (part) {
      case Part::hook: return c.hook;
      case Part::peduncle: return c.peduncle;
      case Part::rachis: return c.rachis;
      case Part::twig: return c.twigs;
      case Part::sub_twig: return params.six_class ? c.sub_twigs : c.twigs;
      case Part::berry: return c.berries;
    }
    return {};
  };
  auto noisy = [&](std::uint8_t base) {
    const double v = base + 255.0 * params.color_noise * rng.normal();
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  };

  GeneratedBunch out;
  PointCloud& cloud = out.cloud;
  cloud.scheme = scheme;
  const double margin = 0.02 * s;
  std::vector<Vec3d> samples;
  for (std::size_t pi = 0; pi < prims.size(); ++pi) {
    const auto& prim = prims[pi];
    samples.clear();
    if (prim.sphere) {
      sample_sphere(prim.center, prim.radius, s, rng, samples);
    } else {
      sample_tube(ArcCurve(prim.centerline), prim.radius, s, rng.uniform(0.0, 2.0 * std::numbers::pi),
                  samples);
    }
    const ClassId label = label_of(prim.part);
    const Rgb base = color_of(prim.part);
    for (const auto& p : samples) {
      bool hidden = false;
      for (std::size_t qi = 0; qi < prims.size() && !hidden; ++qi) {
        hidden = qi != pi && prims[qi].contains(p, margin);
      }
      if (hidden) continue;
      cloud.positions.push_back(p.cast<float>());
      cloud.colors.push_back({noisy(base.r), noisy(base.g), noisy(base.b)});
      cloud.labels.push_back(label);
      out.primitive_of.push_back(static_cast<std::uint32_t>(pi));
    }
  }
  out.primitives = std::move(prims);
  return out;
}

inline PointCloud generate_bunch(const BunchParams& params) { return build_bunch(params).cloud; }

}  // namespace mvlabel

#endif  // MVLABEL_SYNTH_HPP
