// Shared scalar types, physical constants, error hierarchy and the worker
// pool used by the assembly kernels.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace charmode {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;
using cplx = std::complex<double>;

inline constexpr double speed_of_light = 299792458.0;      // m/s
inline constexpr double free_space_impedance = 376.730313668;  // Ohm
inline constexpr double pi = 3.14159265358979323846;

// Error kinds map onto CLI exit codes: config -> 2, solver -> 3, degeneracy -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct MeshError : Error {
  using Error::Error;
};
struct SolverError : Error {
  using Error::Error;
};
struct DegeneracyError : SolverError {
  using SolverError::SolverError;
};

namespace detail {
inline int& thread_count_ref() {
  static int n = 1;
  return n;
}
}  // namespace detail

inline void set_thread_count(int n) {
  detail::thread_count_ref() = n < 1 ? 1 : n;
}
inline int thread_count() { return detail::thread_count_ref(); }

// Splits [0, n) into contiguous slices, one per worker. fn(begin, end) must
// only write to state owned by its slice; results are independent of the
// worker count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  const int workers = std::min<std::int64_t>(thread_count(), n > 0 ? n : 1);
  if (workers <= 1) {
    fn(std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::int64_t step = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t b = w * step;
    const std::int64_t e = std::min<std::int64_t>(b + step, n);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace charmode
