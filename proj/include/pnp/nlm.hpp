#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "pnp/admm.hpp"
#include "pnp/image.hpp"
#include "pnp/weight_matrix.hpp"

namespace pnp {

/// Patch and window geometry of the non-local means filters. The patch is a
/// (2 * patch_radius + 1)-sided box and the search window the l-inf ball of
/// radius search_radius, both restricted to the image's active axes (so a
/// 3D volume gets cubic patches and a single-row image 1D ones).
struct NlmParams {
  int patch_radius = 2;
  int search_radius = 10;
  double sigma_n = 1.0;

  int patch_side() const { return 2 * patch_radius + 1; }
  void validate() const;
};

/// Gaussian patch-similarity weights
///   w(s, r) = exp(-||P_r - P_s||^2 / (2 * |P| * sigma_n^2))
/// for r in the search window of s, |P| the number of pixels per patch.
/// Patches are mirror-padded at the border. Diagonal entries are exactly 1.
WeightMatrix nlm_raw_weights(const Image& image, const NlmParams& params);

/// Classic NLM: raw weights divided by their row sums. Rows sum to 1, columns
/// in general do not.
WeightMatrix nlm_weights(const Image& image, const NlmParams& params);

struct DsgStats {
  /// Rows whose adjusted diagonal would have gone negative.
  std::size_t clamped_diagonals = 0;
};

/// Turns symmetric raw weights into a symmetric doubly stochastic matrix:
///   w(s, r) <- w(s, r) / sqrt(R_s R_r)       (R = raw row sums)
///   w(s, s) <- w(s, s) - (sum_r w(s, r) - 1)
/// If a row's off-diagonal mass exceeds 1 its diagonal would go negative; then
/// every pair (s, r) is scaled by min(1, 1/o_s, 1/o_r), o the off-diagonal
/// sums, before the diagonal is set. This keeps symmetry and unit sums and is
/// counted in `stats`.
WeightMatrix dsg_normalize(WeightMatrix raw, DsgStats* stats = nullptr);

/// Doubly-stochastic-gradient NLM weights: dsg_normalize(nlm_raw_weights()).
WeightMatrix dsg_nlm_weights(const Image& image, const NlmParams& params,
                             DsgStats* stats = nullptr);

/// v_s = sum_r W(s, r) image_r.
Image apply_weights(const WeightMatrix& w, const Image& image);

enum class NlmVariant { plain, doubly_stochastic };

std::string to_string(NlmVariant v);

struct FreezePolicy {
  std::optional<std::size_t> freeze_at;
  bool frozen = false;
  std::optional<WeightMatrix> cached;
};

/// NLM / DSG-NLM denoiser. Before the freeze iteration the weights are
/// recomputed from every input; at the freeze iteration they are computed once
/// more and cached, and every later call applies the cached matrix.
class NlmDenoiser final : public DenoisingOperator {
 public:
  NlmDenoiser(NlmVariant variant, NlmParams params, FreezePolicy policy = {});

  std::string name() const override;
  /// Denoises with sigma_n bound to the P&P value sqrt(beta) * sigma_lambda.
  Image denoise(const Image& v_tilde, double sigma_n, std::size_t iteration) override;
  /// Denoises with params().sigma_n.
  Image denoise(const Image& image, std::size_t iteration_index);

  bool exposes_weight_matrix() const override { return true; }
  const WeightMatrix* weight_matrix() const override;
  void set_freeze_iteration(std::optional<std::size_t> iteration) override;

  NlmVariant variant() const { return variant_; }
  const NlmParams& params() const { return params_; }
  const FreezePolicy& policy() const { return policy_; }
  std::size_t weight_computations() const { return computations_; }
  std::size_t clamped_diagonals() const { return clamped_; }

 private:
  WeightMatrix compute(const Image& image);

  NlmVariant variant_;
  NlmParams params_;
  FreezePolicy policy_;
  std::optional<WeightMatrix> last_;
  std::size_t computations_ = 0;
  std::size_t clamped_ = 0;
};

}  // namespace pnp
