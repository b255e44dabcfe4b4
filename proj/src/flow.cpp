#include <cmath>
#include <vector>

#include "seqpool/dataio.hpp"
#include "seqpool/errors.hpp"

namespace seqpool::dataio {

namespace {

// Disk frames are 32-bit floats; values written back into a loaded dataset
// go through the same rounding so memory and disk stay bit-identical.
double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Tensor lucas_kanade(const Tensor& a, const Tensor& b, std::size_t window) {
  require_rank(a, 2, "flow input");
  require_same_shape(a, b, "flow input pair");
  if (window < 3 || window % 2 == 0)
    throw DomainError("flow window must be odd and at least 3, got " + std::to_string(window));
  const std::size_t h = a.dim(0), w = a.dim(1);
  const std::size_t r = window / 2;

  // Central-difference spatial gradients of the first frame (zero on the
  // border) and the plain temporal difference.
  Tensor ix({h, w}), iy({h, w}), it({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      it[i] = b[i] - a[i];
      if (y >= 1 && y + 1 < h) iy[i] = 0.5 * (a[(y + 1) * w + x] - a[(y - 1) * w + x]);
      if (x >= 1 && x + 1 < w) ix[i] = 0.5 * (a[i + 1] - a[i - 1]);
    }

  Tensor flow({2, h, w});
  const double eig_floor = 1e-4 * static_cast<double>(window * window);
  // Windows must fit inside the gradient-valid interior.
  if (h < 2 * (r + 1) + 1 || w < 2 * (r + 1) + 1) return flow;
  for (std::size_t y = r + 1; y + r + 1 < h; ++y)
    for (std::size_t x = r + 1; x + r + 1 < w; ++x) {
      double sxx = 0, sxy = 0, syy = 0, sxt = 0, syt = 0;
      for (std::size_t wy = y - r; wy <= y + r; ++wy)
        for (std::size_t wx = x - r; wx <= x + r; ++wx) {
          const double gx = ix[wy * w + wx];
          const double gy = iy[wy * w + wx];
          const double gt = it[wy * w + wx];
          sxx += gx * gx;
          sxy += gx * gy;
          syy += gy * gy;
          sxt += gx * gt;
          syt += gy * gt;
        }
      const double trace = sxx + syy;
      const double spread = std::sqrt((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy);
      const double eig_min = 0.5 * (trace - spread);
      if (eig_min < eig_floor) continue;  // textureless or degenerate window
      const double det = sxx * syy - sxy * sxy;
      flow[y * w + x] = (-syy * sxt + sxy * syt) / det;
      flow[h * w + y * w + x] = (sxy * sxt - sxx * syt) / det;
    }
  return flow;
}

Tensor normalize_flow(const Tensor& flow, double clamp_magnitude) {
  if (clamp_magnitude <= 0.0) throw DomainError("flow clamp magnitude must be positive");
  Tensor out(flow.shape());
  for (std::size_t i = 0; i < flow.size(); ++i) {
    double v = flow[i];
    if (v > clamp_magnitude) v = clamp_magnitude;
    if (v < -clamp_magnitude) v = -clamp_magnitude;
    out[i] = v / clamp_magnitude;
  }
  return out;
}

Tensor luma(const Tensor& planes) {
  require_rank(planes, 3, "luma input");
  if (planes.dim(0) < 3) throw DimensionError("luma needs at least 3 color planes");
  const std::size_t h = planes.dim(1), w = planes.dim(2), hw = h * w;
  Tensor out({h, w});
  for (std::size_t i = 0; i < hw; ++i)
    out[i] = 0.299 * planes[i] + 0.587 * planes[hw + i] + 0.114 * planes[2 * hw + i];
  return out;
}

void fill_flow(Dataset& ds, std::size_t window, double clamp_magnitude) {
  if (ds.kind != DataKind::images)
    throw ConfigError("flow extraction requires an image dataset");
  ds.validate();
  for (IdentityRecord& rec : ds.ids) {
    for (Track* track : {&rec.cam_a, &rec.cam_b}) {
      std::vector<Tensor> grays;
      grays.reserve(track->items.size());
      for (const Tensor& frame : track->items) grays.push_back(luma(frame));
      for (std::size_t t = 0; t < track->items.size(); ++t) {
        Tensor& planes = track->items[t];
        const std::size_t hw = planes.dim(1) * planes.dim(2);
        if (t + 1 < track->items.size()) {
          const Tensor f =
              normalize_flow(lucas_kanade(grays[t], grays[t + 1], window), clamp_magnitude);
          for (std::size_t i = 0; i < hw; ++i) {
            planes[3 * hw + i] = as_f32(f[i]);
            planes[4 * hw + i] = as_f32(f[hw + i]);
          }
        } else {
          // The last frame of a track has no successor; it stays at rest.
          for (std::size_t i = 0; i < 2 * hw; ++i) planes[3 * hw + i] = 0.0;
        }
      }
    }
  }
}

}  // namespace seqpool::dataio
