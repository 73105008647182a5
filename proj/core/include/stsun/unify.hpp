#pragma once

#include <cstdint>
#include <vector>

#include "stsun/hypernet.hpp"
#include "stsun/tensor.hpp"

namespace stsun {

/// Divisibility contract between the image size (H1, W1) and the unified
/// grid (H, W). Ph x Pw is the within-patch pixel block.
struct PatchGrid {
  std::int64_t h1 = 0, w1 = 0;  // image extents
  std::int64_t h = 0, w = 0;    // unified grid extents

  std::int64_t ph() const { return h1 / h; }
  std::int64_t pw() const { return w1 / w; }

  static PatchGrid make(std::int64_t h1, std::int64_t w1, std::int64_t h, std::int64_t w);
};

/// Index map for the lossless pixel-grid -> (patch-grid x within-patch)
/// rearrangement over `frames` stacked frames:
///   in  [(frames * H1 * W1) x C_e]   row-major pixels, channel last
///   out [(frames * H * W * C_e) x (Ph * Pw)]
/// Pixel (r, c) lands in patch (r / Ph, c / Pw) at within-patch index
/// (r % Ph) * Pw + (c % Pw). Pure remap, no arithmetic.
std::vector<std::int64_t> patchify_index(const PatchGrid& grid, std::int64_t c_e,
                                         std::int64_t frames);

Tensor patchify(const Tensor& x, const PatchGrid& grid, std::int64_t frames = 1);
Tensor unpatchify(const Tensor& x, const PatchGrid& grid, std::int64_t frames = 1);

/// ISSUM plumbing on generated maps. x is [B, T1, C1, H1, W1]; the spectral
/// map takes C1 -> C_e with bias, the spatial map (Ph*Pw) -> C_a with bias.
/// Returns [B, T1, L, C] with L = H*W, C = C_e*C_a. Frames fold into the
/// batch; every frame of a sample shares the same generated maps.
Tensor issum_apply(const Tensor& x, const GeneratedLinear& spectral,
                   const GeneratedLinear& spatial, const PatchGrid& grid, std::int64_t c_e,
                   std::int64_t c_a);

/// TUM plumbing. x is [B, T1, L, C]; the input map takes T1 -> T with bias,
/// the output map is weight-only [T2 x T] applied transposed. Rows (b, l, ch)
/// never mix. Returns [B, T2, L, C].
Tensor tum_apply(const Tensor& x, const GeneratedLinear& in_map, const GeneratedLinear& out_map);

/// OSSUM plumbing. x is [B, T2, L, C]; the spatial map is weight-only
/// [(Ph*Pw) x C_a] applied transposed, the spectral map weight-only
/// [C2 x C_e] applied transposed. Returns logits [B, T2, C2, H2, W2].
Tensor ossum_apply(const Tensor& x, const GeneratedLinear& spatial,
                   const GeneratedLinear& spectral, const PatchGrid& grid, std::int64_t c_e,
                   std::int64_t c_a);

}  // namespace stsun
