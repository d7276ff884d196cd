#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace facelab {

enum class HeadVariant {
  Softmax,
  AmSoftmax,
  ArcFace,
  AdaCos,
  AdamSoftmax,
  Circle,
  Curricular,
  MvSoftmax,
  NpcFace,
};

const std::vector<std::string>& head_variant_names();
std::string to_string(HeadVariant v);
// Throws LookupError listing the nine valid names.
HeadVariant parse_head_variant(const std::string& name);

// Hyperparameters of a margin-based cosine softmax head.
//   scale     s: multiplier on cosine logits
//   margin    m: additive margin (first NPCFace margin m0)
//   margin2   m1: NPCFace positive-margin slope over hard-negative cosines
//   mv_weight t: re-weighting of hard negatives (MV-Softmax, NPCFace)
//   lambda    λ: AdaM-Softmax margin regulariser weight
//   alpha     α: CurricularFace EMA momentum of the target cosine
struct HeadSpec {
  HeadVariant variant = HeadVariant::AmSoftmax;
  double scale = 32.0;
  double margin = 0.35;
  double margin2 = 0.0;
  double mv_weight = 1.0;
  double lambda = 0.0;
  double alpha = 0.01;
  int num_classes = 2;
  int dim = 512;

  bool operator==(const HeadSpec&) const = default;
};

// Published defaults for each variant.
HeadSpec default_head_spec(HeadVariant variant, int num_classes, int dim);
void validate_head_spec(const HeadSpec& spec);

template <typename T>
using HeadMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One prototype row per class; rows are renormalised inside head_forward.
template <typename T>
struct ClassWeights {
  HeadMatrix<T> weight;  // C x D
};

struct HeadState {
  double scale = 0.0;         // AdaCos dynamic scale s_t
  double curricular_t = 0.0;  // CurricularFace statistic t_k
  std::vector<double> margins;  // AdaM-Softmax per-class margins
  std::int64_t step = 0;

  bool operator==(const HeadState&) const = default;
};

// Statistics of one forward pass consumed by update_head_state.
struct HeadBatchStats {
  bool valid = false;
  std::vector<double> target_cos;
  // Batch mean of sum_{j != y} exp(s * cos θ_j) at the scale used in the
  // forward pass.
  double mean_nontarget_exp = 0.0;
};

template <typename T>
struct HeadResult {
  HeadMatrix<T> cosines;  // B x C, Ŵ_j · x̂_i
  HeadMatrix<T> logits;   // B x C
  T loss = 0;
  HeadMatrix<T> grad_features;  // B x D, w.r.t. the unnormalised features
  HeadMatrix<T> grad_weights;   // C x D, w.r.t. the unnormalised weights
  std::vector<T> grad_margins;  // C, AdaM-Softmax only
  HeadBatchStats stats;
};

inline constexpr double kCosineClampEps = 1e-7;

template <typename T>
std::pair<ClassWeights<T>, HeadState> create_head(const HeadSpec& spec, std::uint64_t seed);

// Loss is the batch-mean cross-entropy over the variant's logits, plus
// -λ·mean(m_j) for AdaM-Softmax. Gradients are exact derivatives of that
// loss (no stop-gradient on adaptive coefficients).
template <typename T>
HeadResult<T> head_forward(const HeadSpec& spec, const ClassWeights<T>& weights,
                           const HeadState& state, const HeadMatrix<T>& features,
                           std::span<const int> labels, bool compute_grad = true);

// AdaCos: s_t = ln(B_avg) / cos(min(π/4, θ_med)).
// CurricularFace: t_k = (1-α) t_{k-1} + α·mean(cos θ_y).
// Other variants only advance the step counter.
HeadState update_head_state(const HeadSpec& spec, const HeadState& state,
                            const HeadBatchStats& stats);

}  // namespace facelab
