#include "sluj/crf.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sluj/errors.h"

namespace sluj {

namespace {

double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

void check_path(const Lattice& lat, std::span<const size_t> tags) {
  if (tags.size() != lat.length()) {
    throw ContractError("tag path has " + std::to_string(tags.size()) +
                        " tags for a lattice of length " +
                        std::to_string(lat.length()));
  }
  for (size_t t : tags) {
    if (t >= lat.num_tags()) {
      throw ContractError("tag id " + std::to_string(t) + " outside " +
                          std::to_string(lat.num_tags()) + " tags");
    }
  }
}

}  // namespace

void validate_lattice(const Lattice& lat) {
  if (!lat.emissions.defined() || !lat.transitions.defined()) {
    throw DimensionError("lattice: missing emissions or transitions");
  }
  const size_t T = lat.num_tags();
  if (lat.transitions.rows() != T + 2 || lat.transitions.cols() != T + 2) {
    throw DimensionError("lattice: transitions " +
                         lat.transitions.shape().str() + " for " +
                         std::to_string(T) + " tags");
  }
}

Tensor sequence_score(const Lattice& lat, std::span<const size_t> tags) {
  validate_lattice(lat);
  check_path(lat, tags);
  const size_t n = lat.length(), T = lat.num_tags(), W = T + 2;
  auto P = lat.emissions.values();
  auto A = lat.transitions.values();
  double score = A[lat.start_state() * W + tags[0]];
  for (size_t k = 0; k < n; ++k) {
    score += P[k * T + tags[k]];
    if (k + 1 < n) score += A[tags[k] * W + tags[k + 1]];
  }
  score += A[tags[n - 1] * W + lat.stop_state()];

  std::vector<size_t> path(tags.begin(), tags.end());
  Tensor emissions = lat.emissions, transitions = lat.transitions;
  const size_t start = lat.start_state(), stop = lat.stop_state();
  return record_op(
      {1, 1}, {score}, {emissions, transitions},
      [emissions, transitions, path, n, T, W, start, stop](std::span<const double> g) mutable {
        if (emissions.requires_grad()) {
          auto gp = emissions.mutable_grad();
          for (size_t k = 0; k < n; ++k) gp[k * T + path[k]] += g[0];
        }
        if (transitions.requires_grad()) {
          auto ga = transitions.mutable_grad();
          ga[start * W + path[0]] += g[0];
          for (size_t k = 0; k + 1 < n; ++k) ga[path[k] * W + path[k + 1]] += g[0];
          ga[path[n - 1] * W + stop] += g[0];
        }
      });
}

Tensor log_partition(const Lattice& lat) {
  validate_lattice(lat);
  const size_t n = lat.length(), T = lat.num_tags(), W = T + 2;
  const size_t start = lat.start_state(), stop = lat.stop_state();
  auto P = lat.emissions.values();
  auto A = lat.transitions.values();

  // alpha[k][y]: log-sum of prefixes ending in tag y at position k.
  std::vector<double> alpha(n * T);
  std::vector<double> terms(T);
  for (size_t y = 0; y < T; ++y) alpha[y] = A[start * W + y] + P[y];
  for (size_t k = 1; k < n; ++k) {
    for (size_t y = 0; y < T; ++y) {
      for (size_t prev = 0; prev < T; ++prev) {
        terms[prev] = alpha[(k - 1) * T + prev] + A[prev * W + y];
      }
      alpha[k * T + y] = log_sum_exp(terms) + P[k * T + y];
    }
  }
  for (size_t y = 0; y < T; ++y) {
    terms[y] = alpha[(n - 1) * T + y] + A[y * W + stop];
  }
  const double log_z = log_sum_exp(terms);

  Tensor emissions = lat.emissions, transitions = lat.transitions;
  return record_op(
      {1, 1}, {log_z}, {emissions, transitions},
      [emissions, transitions, alpha, n, T, W, start, stop,
       log_z](std::span<const double> g) mutable {
        auto P = emissions.values();
        auto A = transitions.values();
        // beta[k][y]: log-sum of suffixes after tag y at position k.
        std::vector<double> beta(n * T);
        std::vector<double> terms(T);
        for (size_t y = 0; y < T; ++y) beta[(n - 1) * T + y] = A[y * W + stop];
        for (size_t k = n - 1; k-- > 0;) {
          for (size_t y = 0; y < T; ++y) {
            for (size_t next = 0; next < T; ++next) {
              terms[next] = A[y * W + next] + P[(k + 1) * T + next] +
                            beta[(k + 1) * T + next];
            }
            beta[k * T + y] = log_sum_exp(terms);
          }
        }
        auto marginal = [&](size_t k, size_t y) {
          return std::exp(alpha[k * T + y] + beta[k * T + y] - log_z);
        };
        if (emissions.requires_grad()) {
          auto gp = emissions.mutable_grad();
          for (size_t k = 0; k < n; ++k) {
            for (size_t y = 0; y < T; ++y) gp[k * T + y] += g[0] * marginal(k, y);
          }
        }
        if (transitions.requires_grad()) {
          auto ga = transitions.mutable_grad();
          for (size_t y = 0; y < T; ++y) {
            ga[start * W + y] += g[0] * marginal(0, y);
            ga[y * W + stop] += g[0] * marginal(n - 1, y);
          }
          for (size_t k = 0; k + 1 < n; ++k) {
            for (size_t y = 0; y < T; ++y) {
              for (size_t next = 0; next < T; ++next) {
                ga[y * W + next] +=
                    g[0] * std::exp(alpha[k * T + y] + A[y * W + next] +
                                    P[(k + 1) * T + next] +
                                    beta[(k + 1) * T + next] - log_z);
              }
            }
          }
        }
      });
}

Tensor crf_nll(const Lattice& lat, std::span<const size_t> gold) {
  return sub(log_partition(lat), sequence_score(lat, gold));
}

TagPath viterbi(const Lattice& lat) {
  validate_lattice(lat);
  const size_t n = lat.length(), T = lat.num_tags(), W = T + 2;
  const size_t start = lat.start_state(), stop = lat.stop_state();
  auto P = lat.emissions.values();
  auto A = lat.transitions.values();

  std::vector<double> best(n * T);
  std::vector<size_t> back(n * T, 0);
  for (size_t y = 0; y < T; ++y) best[y] = A[start * W + y] + P[y];
  for (size_t k = 1; k < n; ++k) {
    for (size_t y = 0; y < T; ++y) {
      size_t arg = 0;
      double top = best[(k - 1) * T] + A[y];
      for (size_t prev = 1; prev < T; ++prev) {
        double s = best[(k - 1) * T + prev] + A[prev * W + y];
        if (s > top) {
          top = s;
          arg = prev;
        }
      }
      best[k * T + y] = top + P[k * T + y];
      back[k * T + y] = arg;
    }
  }
  size_t last = 0;
  double top = best[(n - 1) * T] + A[stop];
  for (size_t y = 1; y < T; ++y) {
    double s = best[(n - 1) * T + y] + A[y * W + stop];
    if (s > top) {
      top = s;
      last = y;
    }
  }
  TagPath path;
  path.score = top;
  path.tags.assign(n, 0);
  path.tags[n - 1] = last;
  for (size_t k = n - 1; k > 0; --k) path.tags[k - 1] = back[k * T + path.tags[k]];
  return path;
}

}  // namespace sluj
