#include "stsun/unify.hpp"

#include <sstream>

#include "stsun/ops.hpp"

namespace stsun {

PatchGrid PatchGrid::make(std::int64_t h1, std::int64_t w1, std::int64_t h, std::int64_t w) {
  if (h < 1 || w < 1 || h1 < 1 || w1 < 1) {
    throw ValidationError("patch grid: extents must be >= 1");
  }
  if (h1 % h != 0 || w1 % w != 0) {
    std::ostringstream os;
    os << "patch grid: image " << h1 << "x" << w1 << " not divisible by unified grid " << h << "x"
       << w;
    throw ValidationError(os.str());
  }
  return PatchGrid{h1, w1, h, w};
}

std::vector<std::int64_t> patchify_index(const PatchGrid& grid, std::int64_t c_e,
                                         std::int64_t frames) {
  std::int64_t ph = grid.ph(), pw = grid.pw();
  std::int64_t cells = grid.h1 * grid.w1;
  auto total = static_cast<std::size_t>(frames * cells * c_e);
  std::vector<std::int64_t> index(total);
  for (std::int64_t f = 0; f < frames; ++f) {
    for (std::int64_t r = 0; r < grid.h1; ++r) {
      for (std::int64_t c = 0; c < grid.w1; ++c) {
        std::int64_t patch = (r / ph) * grid.w + (c / pw);
        std::int64_t within = (r % ph) * pw + (c % pw);
        for (std::int64_t e = 0; e < c_e; ++e) {
          std::int64_t src = (f * cells + r * grid.w1 + c) * c_e + e;
          std::int64_t dst = (f * grid.h * grid.w * c_e + patch * c_e + e) * (ph * pw) + within;
          index[static_cast<std::size_t>(dst)] = src;
        }
      }
    }
  }
  return index;
}

Tensor patchify(const Tensor& x, const PatchGrid& grid, std::int64_t frames) {
  std::int64_t cells = grid.h1 * grid.w1;
  if (x.rank() != 2 || x.dim(0) != frames * cells) {
    throw ShapeError("patchify: expected [(frames * H1 * W1) x C_e], got " +
                     shape_str(x.shape()));
  }
  std::int64_t c_e = x.dim(1);
  auto index = patchify_index(grid, c_e, frames);
  return gather_flat(x, std::move(index),
                     {frames * grid.h * grid.w * c_e, grid.ph() * grid.pw()});
}

Tensor unpatchify(const Tensor& x, const PatchGrid& grid, std::int64_t frames) {
  std::int64_t ph = grid.ph(), pw = grid.pw();
  if (x.rank() != 2 || x.dim(1) != ph * pw || x.dim(0) % (grid.h * grid.w) != 0) {
    throw ShapeError("unpatchify: expected [(frames * H * W * C_e) x (Ph * Pw)], got " +
                     shape_str(x.shape()));
  }
  std::int64_t c_e = x.dim(0) / (frames * grid.h * grid.w);
  if (x.dim(0) != frames * grid.h * grid.w * c_e) {
    throw ShapeError("unpatchify: rows inconsistent with frames and grid");
  }
  // Exact inverse of patchify: swap source and destination of the bijection.
  auto fwd = patchify_index(grid, c_e, frames);
  std::vector<std::int64_t> index(fwd.size());
  for (std::size_t dst = 0; dst < fwd.size(); ++dst) {
    index[static_cast<std::size_t>(fwd[dst])] = static_cast<std::int64_t>(dst);
  }
  return gather_flat(x, std::move(index), {frames * grid.h1 * grid.w1, c_e});
}

Tensor issum_apply(const Tensor& x, const GeneratedLinear& spectral,
                   const GeneratedLinear& spatial, const PatchGrid& grid, std::int64_t c_e,
                   std::int64_t c_a) {
  if (x.rank() != 5) throw ShapeError("issum: expected [B, T1, C1, H1, W1]");
  std::int64_t b = x.dim(0), t1 = x.dim(1), c1 = x.dim(2), h1 = x.dim(3), w1 = x.dim(4);
  if (h1 != grid.h1 || w1 != grid.w1) {
    throw ShapeError("issum: image extents do not match the patch grid");
  }
  if (spectral.weight.dim(0) != c1 || spectral.weight.dim(1) != c_e) {
    throw ShapeError("issum: spectral weight must be [C1 x C_e]");
  }
  if (spatial.weight.dim(0) != grid.ph() * grid.pw() || spatial.weight.dim(1) != c_a) {
    throw ShapeError("issum: spatial weight must be [(Ph*Pw) x C_a]");
  }
  std::int64_t frames = b * t1;

  // Spectral unification over folded frames: [(B*T1*H1*W1) x C1] -> C_e.
  Tensor pixels = reshape(permute(x, {0, 1, 3, 4, 2}), {frames * h1 * w1, c1});
  Tensor spectral_out = apply_linear(spectral, pixels);

  // Spatial unification: patchify, map the within-patch axis to C_a.
  Tensor patched = patchify(spectral_out, grid, frames);
  Tensor spatial_out = apply_linear(spatial, patched);
  return reshape(spatial_out, {b, t1, grid.h * grid.w, c_e * c_a});
}

Tensor tum_apply(const Tensor& x, const GeneratedLinear& in_map, const GeneratedLinear& out_map) {
  if (x.rank() != 4) throw ShapeError("tum: expected [B, T1, L, C]");
  std::int64_t b = x.dim(0), t1 = x.dim(1), l = x.dim(2), c = x.dim(3);
  if (in_map.weight.dim(0) != t1) {
    throw ShapeError("tum: input map rows must equal T1");
  }
  std::int64_t t = in_map.weight.dim(1);
  if (out_map.weight.dim(1) != t) {
    throw ShapeError("tum: output map columns must equal the unified length T");
  }
  if (out_map.has_bias()) {
    throw ValidationError("tum: the output-side map is bias-free by construction");
  }
  std::int64_t t2 = out_map.weight.dim(0);

  Tensor seq = reshape(permute(x, {0, 2, 3, 1}), {b * l * c, t1});
  Tensor unified = apply_linear(in_map, seq);                 // [(B*L*C) x T]
  Tensor out = apply_linear_transposed(out_map, unified);     // [(B*L*C) x T2]
  return permute(reshape(out, {b, l, c, t2}), {0, 3, 1, 2});  // [B, T2, L, C]
}

Tensor ossum_apply(const Tensor& x, const GeneratedLinear& spatial,
                   const GeneratedLinear& spectral, const PatchGrid& grid, std::int64_t c_e,
                   std::int64_t c_a) {
  if (x.rank() != 4) throw ShapeError("ossum: expected [B, T2, L, C]");
  std::int64_t b = x.dim(0), t2 = x.dim(1), l = x.dim(2), c = x.dim(3);
  if (l != grid.h * grid.w || c != c_e * c_a) {
    throw ShapeError("ossum: feature extents do not match the unified dims");
  }
  if (spatial.weight.dim(0) != grid.ph() * grid.pw() || spatial.weight.dim(1) != c_a) {
    throw ShapeError("ossum: spatial weight must be [(Ph*Pw) x C_a]");
  }
  if (spectral.weight.dim(1) != c_e) {
    throw ShapeError("ossum: spectral weight must be [C2 x C_e]");
  }
  if (spatial.has_bias() || spectral.has_bias()) {
    throw ValidationError("ossum: output-side maps are bias-free by construction");
  }
  std::int64_t c2 = spectral.weight.dim(0);
  std::int64_t frames = b * t2;

  Tensor rows = reshape(x, {frames * l * c_e, c_a});
  Tensor widened = apply_linear_transposed(spatial, rows);  // [(F*L*C_e) x (Ph*Pw)]
  Tensor pixels = unpatchify(widened, grid, frames);        // [(F*H2*W2) x C_e]
  Tensor logits = apply_linear_transposed(spectral, pixels);
  Tensor shaped = reshape(logits, {b, t2, grid.h1, grid.w1, c2});
  return permute(shaped, {0, 1, 4, 2, 3});  // [B, T2, C2, H2, W2]
}

}  // namespace stsun
