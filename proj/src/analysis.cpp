// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sonarllm::analysis {

namespace {

struct LinearFit {
  double a = 0.0;
  double b = 0.0;
  double sse = 0.0;
};

// Closed-form least squares of L ~ a*x + b with x = N^-alpha.
LinearFit solve_at_alpha(const std::vector<ScalingPoint>& pts, double alpha) {
  const double n = static_cast<double>(pts.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::vector<double> xs(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    xs[i] = std::pow(pts[i].n, -alpha);
    sx += xs[i];
    sy += pts[i].loss;
    sxx += xs[i] * xs[i];
    sxy += xs[i] * pts[i].loss;
  }
  LinearFit fit;
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) {
    fit.a = 0.0;
    fit.b = sy / n;
  } else {
    fit.a = (n * sxy - sx * sy) / denom;
    fit.b = (sy - fit.a * sx) / n;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double r = pts[i].loss - (fit.a * xs[i] + fit.b);
    fit.sse += r * r;
  }
  return fit;
}

}  // namespace

ScalingFit fit_scaling_law(const std::vector<ScalingPoint>& points) {
  if (points.size() < 4) {
    throw std::invalid_argument("fit_scaling_law: need at least 4 points");
  }
  std::set<double> distinct;
  for (const ScalingPoint& p : points) {
    if (!(p.loss > 0.0)) {
      throw std::invalid_argument("fit_scaling_law: losses must be positive");
    }
    if (!(p.n > 0.0)) {
      throw std::invalid_argument("fit_scaling_law: counts must be positive");
    }
    distinct.insert(p.n);
  }
  if (distinct.size() != points.size()) {
    throw std::invalid_argument("fit_scaling_law: parameter counts must be distinct");
  }

  const double lo = 0.05, hi = 2.0, step = 0.005;

  ScalingFit fit;
  fit.points = points;

  double mean = 0.0;
  for (const ScalingPoint& p : points) mean += p.loss;
  mean /= static_cast<double>(points.size());
  double ss_tot = 0.0;
  bool all_equal = true;
  for (const ScalingPoint& p : points) {
    ss_tot += (p.loss - mean) * (p.loss - mean);
    if (p.loss != points[0].loss) all_equal = false;
  }
  if (all_equal) {
    fit.a = 0.0;
    fit.alpha = lo;
    fit.b = mean;
    fit.r2 = 1.0;
    fit.degenerate = true;
    return fit;
  }

  double best_alpha = lo;
  double best_sse = std::numeric_limits<double>::infinity();
  for (double alpha = lo; alpha <= hi + 1e-12; alpha += step) {
    const double sse = solve_at_alpha(points, alpha).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best_alpha = alpha;
    }
  }

  // Golden-section refinement around the best grid cell.
  double a_lo = std::max(lo, best_alpha - step);
  double a_hi = std::min(hi, best_alpha + step);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = a_hi - gr * (a_hi - a_lo);
  double d = a_lo + gr * (a_hi - a_lo);
  double fc = solve_at_alpha(points, c).sse;
  double fd = solve_at_alpha(points, d).sse;
  while (a_hi - a_lo > 1e-6) {
    if (fc < fd) {
      a_hi = d;
      d = c;
      fd = fc;
      c = a_hi - gr * (a_hi - a_lo);
      fc = solve_at_alpha(points, c).sse;
    } else {
      a_lo = c;
      c = d;
      fc = fd;
      d = a_lo + gr * (a_hi - a_lo);
      fd = solve_at_alpha(points, d).sse;
    }
  }
  fit.alpha = (a_lo + a_hi) / 2.0;
  const LinearFit lin = solve_at_alpha(points, fit.alpha);
  fit.a = lin.a;
  fit.b = lin.b;
  fit.r2 = ss_tot > 0.0 ? 1.0 - lin.sse / ss_tot : 1.0;
  return fit;
}

// ---- FLOPs model -------------------------------------------------------------

std::int64_t ArchShape::nonembedding_params() const {
  const std::int64_t d = d_model, f = ffn_mult * d_model;
  const std::int64_t per_layer = 4 * d * d + 3 * d * f + 2 * d;
  return n_layers * per_layer + d;  // + final norm gain
}

std::int64_t ArchShape::concept_core_params() const {
  return nonembedding_params() + 2 * d_embed * d_model;
}

std::int64_t flops_token_llm(const ArchShape& shape, std::int64_t t_tokens) {
  if (t_tokens < 1) throw std::invalid_argument("flops_token_llm: T must be >= 1");
  const std::int64_t p = shape.nonembedding_params();
  const std::int64_t ld = shape.n_layers * shape.d_model;
  return 2 * p * t_tokens + 2 * ld * t_tokens * (t_tokens + 1);
}

namespace {

// One encoder pass over a lambda-token sentence: parallel, full attention.
std::int64_t encoder_pass_flops(const ArchShape& enc, std::int64_t lambda) {
  return lambda * 2 * enc.nonembedding_params() +
         2 * enc.n_layers * enc.d_model * lambda * lambda;
}

// One decoder realization of a lambda-token sentence: cached steps.
std::int64_t decoder_pass_flops(const ArchShape& dec, std::int64_t lambda) {
  return lambda * 2 * dec.nonembedding_params() +
         2 * dec.n_layers * dec.d_model * lambda * (lambda + 1);
}

}  // namespace

std::int64_t flops_sonar_llm(const FlopsModel& model, std::int64_t t_tokens) {
  if (t_tokens < 1) throw std::invalid_argument("flops_sonar_llm: T must be >= 1");
  const std::int64_t lambda = model.avg_sentence_len;
  if (lambda < 1) throw std::invalid_argument("flops_sonar_llm: lambda must be >= 1");
  const std::int64_t steps = (t_tokens + lambda - 1) / lambda;  // ceil
  const std::int64_t pc = model.concept_core.concept_core_params();
  const std::int64_t lc_dc = model.concept_core.n_layers * model.concept_core.d_model;
  const std::int64_t core = 2 * pc * steps + 2 * lc_dc * steps * (steps + 1);
  const std::int64_t codec = steps * (encoder_pass_flops(model.encoder, lambda) +
                                      decoder_pass_flops(model.decoder, lambda));
  return core + codec;
}

CrossoverResult crossover_length(const ArchShape& token_shape,
                                 const FlopsModel& model,
                                 std::int64_t t_max_search) {
  if (t_max_search < 2) {
    throw std::invalid_argument("crossover_length: search bound must be >= 2");
  }
  auto diff = [&](std::int64_t t) {
    return flops_sonar_llm(model, t) - flops_token_llm(token_shape, t);
  };

  CrossoverResult result;

  // Doubling grid; note where the sign first flips.
  std::vector<std::int64_t> grid;
  for (std::int64_t t = 1; t < t_max_search; t *= 2) grid.push_back(t);
  grid.push_back(t_max_search);
  std::int64_t first_neg = -1, last_nonneg = 1;
  bool single_crossing = true;
  for (std::int64_t t : grid) {
    if (diff(t) < 0) {
      if (first_neg < 0) first_neg = t;
    } else {
      if (first_neg >= 0) single_crossing = false;  // sign flipped back
      last_nonneg = t;
    }
  }
  if (first_neg < 0) return result;  // never cheaper within the bound

  std::int64_t candidate;
  if (single_crossing) {
    std::int64_t lo = std::min(last_nonneg, first_neg);
    std::int64_t hi = first_neg;
    if (lo >= hi) lo = 1;
    while (lo + 1 < hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (diff(mid) < 0)
        hi = mid;
      else
        lo = mid;
    }
    candidate = hi;
  } else {
    candidate = first_neg;
    result.used_fallback = true;
  }

  // The sentence-level cost is flat within each lambda-block while the
  // token cost rises, so the difference saw-tooths; the binary search can
  // overshoot the earliest crossing. Verify by scanning block boundaries
  // (where the difference is most negative) and then the winning block.
  const std::int64_t lambda = model.avg_sentence_len;
  std::int64_t earliest_block_end = -1;
  for (std::int64_t end = lambda; end < candidate; end += lambda) {
    if (diff(end) < 0) {
      earliest_block_end = end;
      break;
    }
  }
  if (earliest_block_end >= 0) {
    result.used_fallback = true;
    std::int64_t t = earliest_block_end;
    while (t > 1 && diff(t - 1) < 0) --t;
    result.t_star = t;
    return result;
  }
  // Minimality within the candidate's own block.
  while (candidate > 1 && diff(candidate - 1) < 0) --candidate;
  result.t_star = candidate;
  return result;
}

std::string flops_csv(const ArchShape& token_shape, const FlopsModel& model,
                      std::int64_t t_max, bool dense) {
  std::ostringstream os;
  os << "t,flops_llm,flops_sonar\n";
  char buf[128];
  auto emit = [&](std::int64_t t) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%lld\n",
                  static_cast<long long>(t),
                  static_cast<long long>(flops_token_llm(token_shape, t)),
                  static_cast<long long>(flops_sonar_llm(model, t)));
    os << buf;
  };
  if (dense) {
    for (std::int64_t t = 1; t <= t_max; ++t) emit(t);
  } else {
    std::int64_t t = 1;
    for (; t < t_max; t *= 2) emit(t);
    emit(t_max);
  }
  return os.str();
}

}  // namespace sonarllm::analysis
