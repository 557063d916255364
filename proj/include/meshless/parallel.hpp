#pragma once

#include <Eigen/Core>

#include <exception>
#include <mutex>

namespace meshless {

/// Sets the worker count used by every parallel loop in the library.
void set_thread_count(int count);
int thread_count();
/// Processors available to the process.
int hardware_threads();

/// Dot product whose rounding does not depend on the thread count: partial
/// sums are taken over fixed-size chunks and combined in chunk order.
double deterministic_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double deterministic_norm(const Eigen::VectorXd& a);

/// Keeps the first exception thrown by loop bodies run inside an OpenMP
/// region, which must not let exceptions escape; later bodies are skipped.
class ExceptionRelay {
 public:
  template <typename Body>
  void run(Body&& body) noexcept {
    {
      std::lock_guard lock(mutex_);
      if (error_) return;
    }
    try {
      body();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

}  // namespace meshless
