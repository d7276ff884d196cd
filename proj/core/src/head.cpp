#include "facelab/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "facelab/error.hpp"
#include "facelab/random.hpp"

namespace facelab {

namespace {

const std::vector<std::pair<HeadVariant, std::string>>& variant_table() {
  static const std::vector<std::pair<HeadVariant, std::string>> table = {
      {HeadVariant::Softmax, "softmax"},       {HeadVariant::AmSoftmax, "am_softmax"},
      {HeadVariant::ArcFace, "arcface"},       {HeadVariant::AdaCos, "adacos"},
      {HeadVariant::AdamSoftmax, "adam_softmax"}, {HeadVariant::Circle, "circle"},
      {HeadVariant::Curricular, "curricular"}, {HeadVariant::MvSoftmax, "mv_softmax"},
      {HeadVariant::NpcFace, "npcface"},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& head_variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [v, s] : variant_table()) n.push_back(s);
    return n;
  }();
  return names;
}

std::string to_string(HeadVariant v) {
  for (const auto& [var, s] : variant_table()) {
    if (var == v) return s;
  }
  return "unknown";
}

HeadVariant parse_head_variant(const std::string& name) {
  for (const auto& [v, s] : variant_table()) {
    if (s == name) return v;
  }
  std::string valid;
  for (const auto& s : head_variant_names()) valid += (valid.empty() ? "" : ", ") + s;
  throw LookupError("unknown head variant '" + name + "' (valid: " + valid + ")");
}

HeadSpec default_head_spec(HeadVariant variant, int num_classes, int dim) {
  HeadSpec s;
  s.variant = variant;
  s.num_classes = num_classes;
  s.dim = dim;
  switch (variant) {
    case HeadVariant::Softmax: s.scale = 32; s.margin = 0; break;
    case HeadVariant::AmSoftmax: s.scale = 32; s.margin = 0.35; break;
    case HeadVariant::ArcFace: s.scale = 64; s.margin = 0.5; break;
    case HeadVariant::AdaCos: s.margin = 0; s.scale = std::sqrt(2.0) * std::log(num_classes - 1.0); break;
    case HeadVariant::AdamSoftmax: s.scale = 32; s.margin = 0.35; s.lambda = 1.0; break;
    case HeadVariant::Circle: s.scale = 64; s.margin = 0.25; break;
    case HeadVariant::Curricular: s.scale = 64; s.margin = 0.5; s.alpha = 0.01; break;
    case HeadVariant::MvSoftmax: s.scale = 32; s.margin = 0.35; s.mv_weight = 1.2; break;
    case HeadVariant::NpcFace:
      s.scale = 32; s.margin = 0.4; s.margin2 = 0.2; s.mv_weight = 1.1;
      break;
  }
  return s;
}

void validate_head_spec(const HeadSpec& s) {
  // AdaCos derives its scale from the class count at creation time.
  if (s.variant != HeadVariant::AdaCos && !(s.scale > 0)) throw ValueError("head: scale must be > 0");
  if (!(s.margin >= 0 && s.margin < 1)) throw ValueError("head: margin must be in [0, 1)");
  if (!(s.margin2 >= 0 && s.margin2 < 1)) throw ValueError("head: margin2 must be in [0, 1)");
  if (!(s.mv_weight >= 1)) throw ValueError("head: mv_weight must be >= 1");
  if (!(s.lambda >= 0)) throw ValueError("head: lambda must be >= 0");
  if (!(s.alpha >= 0 && s.alpha <= 1)) throw ValueError("head: alpha must be in [0, 1]");
  if (s.num_classes < 2) throw ValueError("head: num_classes must be >= 2");
  if (s.dim < 1) throw ValueError("head: dim must be >= 1");
}

template <typename T>
std::pair<ClassWeights<T>, HeadState> create_head(const HeadSpec& spec, std::uint64_t seed) {
  validate_head_spec(spec);
  ClassWeights<T> w;
  w.weight.resize(spec.num_classes, spec.dim);
  Rng rng(derive_seed(seed, "head_init"));
  for (int i = 0; i < spec.num_classes; ++i) {
    double sq = 0;
    for (int j = 0; j < spec.dim; ++j) {
      const double v = rng.normal();
      w.weight(i, j) = static_cast<T>(v);
      sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (int j = 0; j < spec.dim; ++j) w.weight(i, j) = static_cast<T>(w.weight(i, j) * inv);
  }
  HeadState st;
  if (spec.variant == HeadVariant::AdaCos) {
    st.scale = std::sqrt(2.0) * std::log(spec.num_classes - 1.0);
  } else {
    st.scale = spec.scale;
  }
  st.curricular_t = 0.0;
  if (spec.variant == HeadVariant::AdamSoftmax) {
    st.margins.assign(static_cast<std::size_t>(spec.num_classes), spec.margin);
  }
  return {std::move(w), std::move(st)};
}

namespace {

// Value and derivative of s·cos(θ + m) with cos θ = c, evaluated as
// c·cos m - sin θ·sin m. The cosine clamp only guards 1/sin θ in the
// derivative, so c = ±1 yields exact values.
template <typename T>
std::pair<T, T> shifted_cos(T c, T m, T s) {
  const T lo = static_cast<T>(-1 + kCosineClampEps);
  const T hi = static_cast<T>(1 - kCosineClampEps);
  const bool inside = c > lo && c < hi;
  const T sin_theta = std::sqrt(std::max(T(0), 1 - c * c));
  const T value = s * (c * std::cos(m) - sin_theta * std::sin(m));
  if (!inside) return {value, T(0)};
  const T cc = std::clamp(c, lo, hi);
  const T deriv = s * (std::cos(m) + cc * std::sin(m) / std::sqrt(1 - cc * cc));
  return {value, deriv};
}

// d/dm of s·cos(θ + m).
template <typename T>
T shifted_cos_dm(T c, T m, T s) {
  const T sin_theta = std::sqrt(std::max(T(0), 1 - c * c));
  return -s * (c * std::sin(m) + sin_theta * std::cos(m));
}

}  // namespace

template <typename T>
HeadResult<T> head_forward(const HeadSpec& spec, const ClassWeights<T>& weights,
                           const HeadState& state, const HeadMatrix<T>& features,
                           std::span<const int> labels, bool compute_grad) {
  const int B = static_cast<int>(features.rows());
  const int D = static_cast<int>(features.cols());
  const int C = static_cast<int>(weights.weight.rows());
  if (B < 1) throw ShapeError("head_forward: empty batch");
  if (static_cast<int>(labels.size()) != B) throw ShapeError("head_forward: labels/batch mismatch");
  if (weights.weight.cols() != D) {
    throw ShapeError("head_forward: feature dim " + std::to_string(D) + " vs weight dim " +
                     std::to_string(weights.weight.cols()));
  }
  if (C != spec.num_classes) throw ShapeError("head_forward: weight rows differ from num_classes");
  if (!features.allFinite()) throw ValueError("head_forward: NaN or infinite value in features");
  for (int y : labels) {
    if (y < 0 || y >= C) {
      throw ValueError("head_forward: label " + std::to_string(y) + " out of range [0, " +
                       std::to_string(C) + ")");
    }
  }
  const bool adam = spec.variant == HeadVariant::AdamSoftmax;
  if (adam && static_cast<int>(state.margins.size()) != C) {
    throw ShapeError("head_forward: AdaM-Softmax state has wrong margin count");
  }

  Eigen::Matrix<T, Eigen::Dynamic, 1> xnorm = features.rowwise().norm();
  Eigen::Matrix<T, Eigen::Dynamic, 1> wnorm = weights.weight.rowwise().norm();
  for (int i = 0; i < B; ++i) {
    if (!(xnorm(i) > 0)) throw ValueError("head_forward: zero feature vector");
  }
  for (int j = 0; j < C; ++j) {
    if (!(wnorm(j) > 0)) throw ValueError("head_forward: zero class weight row");
  }
  HeadMatrix<T> xhat = features.array().colwise() / xnorm.array();
  HeadMatrix<T> what = weights.weight.array().colwise() / wnorm.array();

  HeadResult<T> r;
  r.cosines = xhat * what.transpose();
  r.logits.resize(B, C);
  HeadMatrix<T> dlogit_dcos(B, C);  // diagonal derivative dz_j/dc_j
  HeadMatrix<T> dtarget_dcos;       // npcface: dz_y/dc_j for j in the hard set
  if (spec.variant == HeadVariant::NpcFace) dtarget_dcos = HeadMatrix<T>::Zero(B, C);

  const T s = static_cast<T>(spec.variant == HeadVariant::AdaCos ? state.scale : spec.scale);
  const T m = static_cast<T>(spec.margin);
  const T t = static_cast<T>(spec.mv_weight);
  std::vector<T> adam_dm(adam ? static_cast<std::size_t>(B) : 0);

  for (int i = 0; i < B; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const T cy = r.cosines(i, y);
    // Non-target logits default to s·c.
    for (int j = 0; j < C; ++j) {
      r.logits(i, j) = s * r.cosines(i, j);
      dlogit_dcos(i, j) = s;
    }
    switch (spec.variant) {
      case HeadVariant::Softmax:
      case HeadVariant::AdaCos:
        break;
      case HeadVariant::AmSoftmax:
        r.logits(i, y) = s * (cy - m);
        break;
      case HeadVariant::AdamSoftmax: {
        const T my = static_cast<T>(state.margins[static_cast<std::size_t>(y)]);
        r.logits(i, y) = s * (cy - my);
        adam_dm[static_cast<std::size_t>(i)] = -s;
        break;
      }
      case HeadVariant::ArcFace: {
        // Follow cos(θ + m) while θ + m <= π, i.e. cos θ >= cos(π - m).
        if (cy >= std::cos(std::numbers::pi_v<T> - m)) {
          auto [v, dv] = shifted_cos(cy, m, s);
          r.logits(i, y) = v;
          dlogit_dcos(i, y) = dv;
        } else {
          r.logits(i, y) = s * (cy - m * std::sin(m));
        }
        break;
      }
      case HeadVariant::Circle: {
        const T dp = 1 - m;
        const T ap_raw = 1 + m - cy;
        const T ap = std::max(T(0), ap_raw);
        r.logits(i, y) = s * ap * (cy - dp);
        dlogit_dcos(i, y) = s * (ap - (ap_raw > 0 ? (cy - dp) : T(0)));
        for (int j = 0; j < C; ++j) {
          if (j == y) continue;
          const T cj = r.cosines(i, j);
          const T an_raw = cj + m;
          const T an = std::max(T(0), an_raw);
          r.logits(i, j) = s * an * (cj - m);
          dlogit_dcos(i, j) = s * (an + (an_raw > 0 ? (cj - m) : T(0)));
        }
        break;
      }
      case HeadVariant::Curricular: {
        auto [v, dv] = shifted_cos(cy, m, s);
        r.logits(i, y) = v;
        dlogit_dcos(i, y) = dv;
        const T target_cos_m = v / s;
        const T tk = static_cast<T>(state.curricular_t);
        for (int j = 0; j < C; ++j) {
          if (j == y) continue;
          const T cj = r.cosines(i, j);
          if (target_cos_m < cj) {
            r.logits(i, j) = s * cj * (tk + cj);
            dlogit_dcos(i, j) = s * (tk + 2 * cj);
          }
        }
        break;
      }
      case HeadVariant::MvSoftmax: {
        r.logits(i, y) = s * (cy - m);
        for (int j = 0; j < C; ++j) {
          if (j == y) continue;
          const T cj = r.cosines(i, j);
          if (cj > cy - m) {
            r.logits(i, j) = s * (t * cj + t - 1);
            dlogit_dcos(i, j) = s * t;
          }
        }
        break;
      }
      case HeadVariant::NpcFace: {
        const T m1 = static_cast<T>(spec.margin2);
        T hard_sum = 0;
        int hard_count = 0;
        for (int j = 0; j < C; ++j) {
          if (j == y) continue;
          const T cj = r.cosines(i, j);
          if (cj > cy - m) {
            hard_sum += cj;
            ++hard_count;
            r.logits(i, j) = s * (t * cj + t - 1);
            dlogit_dcos(i, j) = s * t;
          }
        }
        const T mt = hard_count > 0 ? m + m1 * hard_sum / hard_count : m;
        auto [v, dv] = shifted_cos(cy, mt, s);
        r.logits(i, y) = v;
        dlogit_dcos(i, y) = dv;
        if (hard_count > 0) {
          const T dm = shifted_cos_dm(cy, mt, s) * m1 / static_cast<T>(hard_count);
          for (int j = 0; j < C; ++j) {
            if (j != y && r.cosines(i, j) > cy - m) dtarget_dcos(i, j) = dm;
          }
        }
        break;
      }
    }
  }

  // Cross-entropy over logits with a stable log-sum-exp.
  HeadMatrix<T> dz(B, C);
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const T mx = r.logits.row(i).maxCoeff();
    double sum = 0.0;
    for (int j = 0; j < C; ++j) sum += std::exp(static_cast<double>(r.logits(i, j) - mx));
    const double lse = mx + std::log(sum);
    loss += lse - r.logits(i, y);
    for (int j = 0; j < C; ++j) {
      const double p = std::exp(static_cast<double>(r.logits(i, j)) - lse);
      dz(i, j) = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / B);
    }
  }
  loss /= B;
  if (adam) {
    double mean_m = 0.0;
    for (double v : state.margins) mean_m += v;
    mean_m /= C;
    loss += -spec.lambda * mean_m;
  }
  r.loss = static_cast<T>(loss);

  r.stats.valid = true;
  r.stats.target_cos.resize(static_cast<std::size_t>(B));
  double exp_sum = 0.0;
  for (int i = 0; i < B; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    r.stats.target_cos[static_cast<std::size_t>(i)] = r.cosines(i, y);
    for (int j = 0; j < C; ++j) {
      if (j != y) exp_sum += std::exp(static_cast<double>(s) * r.cosines(i, j));
    }
  }
  r.stats.mean_nontarget_exp = exp_sum / B;

  if (!compute_grad) return r;

  HeadMatrix<T> g = dz.cwiseProduct(dlogit_dcos);  // dL/dcos
  if (spec.variant == HeadVariant::NpcFace) {
    for (int i = 0; i < B; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      for (int j = 0; j < C; ++j) {
        if (j != y) g(i, j) += dz(i, y) * dtarget_dcos(i, j);
      }
    }
  }
  HeadMatrix<T> gxhat = g * what;              // B x D
  HeadMatrix<T> gwhat = g.transpose() * xhat;  // C x D
  r.grad_features.resize(B, D);
  for (int i = 0; i < B; ++i) {
    const T proj = xhat.row(i).dot(gxhat.row(i));
    r.grad_features.row(i) = (gxhat.row(i) - proj * xhat.row(i)) / xnorm(i);
  }
  r.grad_weights.resize(C, D);
  for (int j = 0; j < C; ++j) {
    const T proj = what.row(j).dot(gwhat.row(j));
    r.grad_weights.row(j) = (gwhat.row(j) - proj * what.row(j)) / wnorm(j);
  }
  if (adam) {
    r.grad_margins.assign(static_cast<std::size_t>(C), static_cast<T>(-spec.lambda / C));
    for (int i = 0; i < B; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      r.grad_margins[static_cast<std::size_t>(y)] += dz(i, y) * adam_dm[static_cast<std::size_t>(i)];
    }
  }
  return r;
}

HeadState update_head_state(const HeadSpec& spec, const HeadState& state,
                            const HeadBatchStats& stats) {
  if (!stats.valid || stats.target_cos.empty()) {
    throw Error("update_head_state: no batch statistics (head_forward has not run)");
  }
  HeadState next = state;
  ++next.step;
  switch (spec.variant) {
    case HeadVariant::AdaCos: {
      std::vector<double> theta;
      theta.reserve(stats.target_cos.size());
      for (double c : stats.target_cos) {
        theta.push_back(std::acos(std::clamp(c, -1 + kCosineClampEps, 1 - kCosineClampEps)));
      }
      // Lower median, as in the reference AdaCos implementation.
      const std::size_t mid = (theta.size() - 1) / 2;
      std::nth_element(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(mid), theta.end());
      const double theta_med = theta[mid];
      const double denom = std::cos(std::min(std::numbers::pi / 4, theta_med));
      if (!(stats.mean_nontarget_exp > 0)) throw ValueError("adacos: non-positive B_avg");
      next.scale = std::log(stats.mean_nontarget_exp) / denom;
      break;
    }
    case HeadVariant::Curricular: {
      double mean = 0.0;
      for (double c : stats.target_cos) mean += c;
      mean /= static_cast<double>(stats.target_cos.size());
      next.curricular_t = (1 - spec.alpha) * state.curricular_t + spec.alpha * mean;
      break;
    }
    default:
      break;
  }
  return next;
}

template std::pair<ClassWeights<float>, HeadState> create_head<float>(const HeadSpec&, std::uint64_t);
template std::pair<ClassWeights<double>, HeadState> create_head<double>(const HeadSpec&, std::uint64_t);
template HeadResult<float> head_forward<float>(const HeadSpec&, const ClassWeights<float>&,
                                               const HeadState&, const HeadMatrix<float>&,
                                               std::span<const int>, bool);
template HeadResult<double> head_forward<double>(const HeadSpec&, const ClassWeights<double>&,
                                                 const HeadState&, const HeadMatrix<double>&,
                                                 std::span<const int>, bool);

}  // namespace facelab
