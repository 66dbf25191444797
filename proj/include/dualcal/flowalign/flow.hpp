#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dualcal/error.hpp"
#include "dualcal/imagekit/filter.hpp"
#include "dualcal/imagekit/image.hpp"
#include "dualcal/imagekit/png_io.hpp"
#include "dualcal/imagekit/resample.hpp"

namespace dualcal {

// Dense displacement field. For each ref pixel x, mov(x + (u, v)) ~ ref(x).
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;
  std::vector<std::uint8_t> valid;  // 1 valid, 0 invalid

  FlowField() = default;
  FlowField(int w, int h)
      : width(w), height(h), u(std::size_t(w) * h, 0.0f), v(std::size_t(w) * h, 0.0f), valid(std::size_t(w) * h, 1) {}

  std::size_t index(int y, int x) const { return std::size_t(y) * width + x; }
  friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct FlowParams {
  int levels = 3;
  int window = 15;
  int iters = 10;
  double min_eigen = 1e-4;  // on the window-averaged structure tensor, normalized luma units
};

namespace detail {

struct FlowPlane {
  int w = 0;
  int h = 0;
  std::vector<double> px;

  double at(int y, int x) const { return px[std::size_t(y) * w + x]; }
  double& at(int y, int x) { return px[std::size_t(y) * w + x]; }
};

inline FlowPlane luma_plane(const Raster& img) {
  const RasterF l = luma(img);
  FlowPlane p{img.width(), img.height(), {}};
  p.px.assign(l.data().begin(), l.data().end());
  return p;
}

// sigma = 1 blur, then keep every other sample starting at 0.
inline FlowPlane pyr_down(const FlowPlane& p) {
  const auto k = gaussian_kernel_1d(kernel_size_for_sigma(1.0), 1.0);
  const auto b = convolve_separable(p.px.data(), p.w, p.h, k);
  FlowPlane out{(p.w + 1) / 2, (p.h + 1) / 2, {}};
  out.px.resize(std::size_t(out.w) * out.h);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out.at(y, x) = b[std::size_t(2 * y) * p.w + 2 * x];
  return out;
}

// Window sums over the in-bounds part of a (2r+1)^2 box; fixed summation order.
inline std::vector<double> box_sum(const std::vector<double>& src, int w, int h, int r) {
  std::vector<double> tmp(src.size());
  for (int y = 0; y < h; ++y) {
    const double* row = src.data() + std::size_t(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = std::max(0, x - r); i <= std::min(w - 1, x + r); ++i) acc += row[i];
      tmp[std::size_t(y) * w + x] = acc;
    }
  }
  std::vector<double> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = std::max(0, y - r); j <= std::min(h - 1, y + r); ++j) acc += tmp[std::size_t(j) * w + x];
      out[std::size_t(y) * w + x] = acc;
    }
  }
  return out;
}

inline double box_count(int x, int y, int w, int h, int r) {
  const int nx = std::min(w - 1, x + r) - std::max(0, x - r) + 1;
  const int ny = std::min(h - 1, y + r) - std::max(0, y - r) + 1;
  return double(nx) * ny;
}

inline double central_dx(const FlowPlane& p, int y, int x) {
  return 0.5 * (p.at(y, std::min(p.w - 1, x + 1)) - p.at(y, std::max(0, x - 1)));
}
inline double central_dy(const FlowPlane& p, int y, int x) {
  return 0.5 * (p.at(std::min(p.h - 1, y + 1), x) - p.at(std::max(0, y - 1), x));
}

inline double min_eigen(double a, double b, double c) {
  // [[a, b], [b, c]]
  const double tr = 0.5 * (a + c);
  const double d = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
  return tr - d;
}

struct LevelFlow {
  std::vector<double> u;
  std::vector<double> v;
  std::vector<std::uint8_t> ok;
};

inline LevelFlow lk_level(const FlowPlane& ref, const FlowPlane& mov, LevelFlow flow, const FlowParams& prm) {
  const int w = ref.w;
  const int h = ref.h;
  const std::size_t n = std::size_t(w) * h;
  const int r = prm.window / 2;
  // Gradients come from ref only, so the structure tensor is fixed per level.
  std::vector<double> gx(n), gy(n), ixx(n), ixy(n), iyy(n), ixt(n), iyt(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      gx[i] = central_dx(ref, y, x);
      gy[i] = central_dy(ref, y, x);
      ixx[i] = gx[i] * gx[i];
      ixy[i] = gx[i] * gy[i];
      iyy[i] = gy[i] * gy[i];
    }
  }
  const auto sxx = box_sum(ixx, w, h, r);
  const auto sxy = box_sum(ixy, w, h, r);
  const auto syy = box_sum(iyy, w, h, r);
  flow.ok.assign(n, 1);
  for (int it = 0; it < prm.iters; ++it) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        // Each window pixel is linearized about its own current flow; the
        // solve then yields the window's common displacement directly. Solving
        // for an increment instead lets high-frequency flow error grow through
        // the box filter's negative lobes.
        const double gt = bicubic_sample(mov.px.data(), w, h, x + flow.u[i], y + flow.v[i]) - ref.px[i] -
                          gx[i] * flow.u[i] - gy[i] * flow.v[i];
        ixt[i] = gx[i] * gt;
        iyt[i] = gy[i] * gt;
      }
    }
    const auto sxt = box_sum(ixt, w, h, r);
    const auto syt = box_sum(iyt, w, h, r);
    std::vector<double> next_u = flow.u;
    std::vector<double> next_v = flow.v;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        const double cnt = box_count(x, y, w, h, r);
        if (min_eigen(sxx[i] / cnt, sxy[i] / cnt, syy[i] / cnt) < prm.min_eigen) {
          flow.ok[i] = 0;
          continue;
        }
        flow.ok[i] = 1;
        const double det = sxx[i] * syy[i] - sxy[i] * sxy[i];
        next_u[i] = -(syy[i] * sxt[i] - sxy[i] * syt[i]) / det;
        next_v[i] = -(sxx[i] * syt[i] - sxy[i] * sxt[i]) / det;
      }
    }
    flow.u = std::move(next_u);
    flow.v = std::move(next_v);
  }
  return flow;
}

inline double bilinear(const std::vector<double>& p, int w, int h, double x, double y) {
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const int x0 = std::min(int(x), w - 1);
  const int y0 = std::min(int(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const auto v = [&](int yy, int xx) { return p[std::size_t(yy) * w + xx]; };
  return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

}  // namespace detail

// Pyramidal iterative Lucas-Kanade.
inline FlowField compute_flow(const Raster& ref, const Raster& mov, const FlowParams& prm = {}) {
  detail::require(ref.same_shape(mov), "compute_flow: ref and mov dimensions differ");
  detail::require(prm.levels >= 1, "compute_flow: levels must be >= 1");
  detail::require(prm.window >= 5 && prm.window % 2 == 1, "compute_flow: window must be odd and >= 5");
  detail::require(prm.iters >= 1, "compute_flow: iters must be >= 1");

  std::vector<detail::FlowPlane> pr{detail::luma_plane(ref)};
  std::vector<detail::FlowPlane> pm{detail::luma_plane(mov)};
  for (int l = 1; l < prm.levels; ++l) {
    if (pr.back().w < 2 * prm.window || pr.back().h < 2 * prm.window) break;
    pr.push_back(detail::pyr_down(pr.back()));
    pm.push_back(detail::pyr_down(pm.back()));
  }

  detail::LevelFlow flow;
  for (int l = static_cast<int>(pr.size()) - 1; l >= 0; --l) {
    const int w = pr[l].w;
    const int h = pr[l].h;
    detail::LevelFlow init{std::vector<double>(std::size_t(w) * h, 0.0), std::vector<double>(std::size_t(w) * h, 0.0), {}};
    if (!flow.u.empty()) {
      const int cw = pr[l + 1].w;
      const int ch = pr[l + 1].h;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = std::size_t(y) * w + x;
          init.u[i] = 2.0 * detail::bilinear(flow.u, cw, ch, 0.5 * x, 0.5 * y);
          init.v[i] = 2.0 * detail::bilinear(flow.v, cw, ch, 0.5 * x, 0.5 * y);
        }
    }
    flow = detail::lk_level(pr[l], pm[l], std::move(init), prm);
  }

  FlowField out(ref.width(), ref.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const std::size_t i = out.index(y, x);
      const double tx = x + flow.u[i];
      const double ty = y + flow.v[i];
      const bool ok = flow.ok[i] && std::isfinite(tx) && std::isfinite(ty) && tx >= 0.0 &&
                      tx <= out.width - 1.0 && ty >= 0.0 && ty <= out.height - 1.0;
      out.valid[i] = ok ? 1 : 0;
      out.u[i] = ok ? static_cast<float>(flow.u[i]) : 0.0f;
      out.v[i] = ok ? static_cast<float>(flow.v[i]) : 0.0f;
    }
  }
  return out;
}

// out(x) = img(x + flow(x)) for valid pixels; invalid pixels pass through.
template <typename T>
Image<T> warp_with_flow(const Image<T>& img, const FlowField& flow) {
  detail::require(img.width() == flow.width && img.height() == flow.height, "warp_with_flow: dimension mismatch");
  Image<T> out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t i = flow.index(y, x);
      if (!flow.valid[i]) continue;
      for (int c = 0; c < img.channels(); ++c) {
        const double s = detail::bicubic_sample(img.plane(c).data(), img.width(), img.height(), x + double(flow.u[i]),
                                                y + double(flow.v[i]));
        out.at(c, y, x) = detail::store_sample<T>(s);
      }
    }
  }
  return out;
}

// |luma(a) - luma(b)| after a Gaussian pre-blur, normalized units.
inline RasterF residual_map(const Raster& a, const Raster& b, double blur_sigma = 1.0) {
  detail::require(a.same_shape(b), "residual_map: dimension mismatch");
  RasterF la = luma(a);
  RasterF lb = luma(b);
  if (blur_sigma > 0.0) {
    const int k = kernel_size_for_sigma(blur_sigma);
    la = detail::blur_float(la, k, blur_sigma);
    lb = detail::blur_float(lb, k, blur_sigma);
  }
  RasterF out(a.width(), a.height(), 1);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) out.data()[i] = std::abs(la.data()[i] - lb.data()[i]);
  return out;
}

inline std::vector<std::uint8_t> serialize_flow(const FlowField& f) {
  const std::size_t n = std::size_t(f.width) * f.height;
  std::vector<std::uint8_t> out{'R', 'W', 'F', 'L'};
  out.reserve(12 + n * 9);
  auto put_u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  put_u32(static_cast<std::uint32_t>(f.width));
  put_u32(static_cast<std::uint32_t>(f.height));
  for (const auto* plane : {&f.u, &f.v}) {
    for (float x : *plane) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      put_u32(bits);
    }
  }
  out.insert(out.end(), f.valid.begin(), f.valid.end());
  return out;
}

inline FlowField deserialize_flow(const std::vector<std::uint8_t>& bytes) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::codec, "flow blob: " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RWFL", 4) != 0) throw bad("bad magic");
  std::size_t pos = 4;
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes[pos++]) << (8 * b);
    return v;
  };
  const std::uint32_t w = get_u32();
  const std::uint32_t h = get_u32();
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw bad("bad dimensions");
  const std::size_t n = std::size_t(w) * h;
  if (bytes.size() != 12 + n * 9) throw bad("truncated or oversized payload");
  FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (auto* plane : {&f.u, &f.v}) {
    for (auto& x : *plane) {
      const std::uint32_t bits = get_u32();
      std::memcpy(&x, &bits, 4);
    }
  }
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), f.valid.begin());
  for (auto v : f.valid)
    if (v > 1) throw bad("valid plane must be 0/1");
  return f;
}

inline void save_flow(const FlowField& f, const std::filesystem::path& path) { write_file_bytes(path, serialize_flow(f)); }
inline FlowField load_flow(const std::filesystem::path& path) { return deserialize_flow(read_file_bytes(path)); }

}  // namespace dualcal
