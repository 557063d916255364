#include "meshless/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace meshless {

namespace {
constexpr Eigen::Index kChunk = 4096;
}

void set_thread_count(int count) { omp_set_num_threads(std::max(1, count)); }

int thread_count() { return omp_get_max_threads(); }

int hardware_threads() { return omp_get_num_procs(); }

double deterministic_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index n = a.size();
  const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
  if (chunks <= 1) return a.dot(b);
  std::vector<double> partial(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunk;
    const Eigen::Index len = std::min(kChunk, n - begin);
    partial[static_cast<std::size_t>(c)] = a.segment(begin, len).dot(b.segment(begin, len));
  }
  double sum = 0.0;
  for (double p : partial) sum += p;
  return sum;
}

double deterministic_norm(const Eigen::VectorXd& a) { return std::sqrt(deterministic_dot(a, a)); }

}  // namespace meshless
