#include "kmv/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "kmv/errors.hpp"

namespace kmv {

namespace {

using PlanKey = std::tuple<std::vector<std::size_t>, std::vector<std::size_t>, int>;

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// Plans are never destroyed; the cache lives for the whole process.
std::map<PlanKey, fftw_plan>& plan_cache() {
  static std::map<PlanKey, fftw_plan> cache;
  return cache;
}

fftw_plan get_plan(const std::vector<std::size_t>& shape, const std::vector<std::size_t>& axes,
                   int sign) {
  std::lock_guard<std::mutex> lock(plan_mutex());
  PlanKey key{shape, axes, sign};
  auto it = plan_cache().find(key);
  if (it != plan_cache().end()) return it->second;

  std::vector<fftw_iodim> dims, loops;
  std::vector<bool> transformed(shape.size(), false);
  for (auto a : axes) {
    if (a >= shape.size()) throw ContractViolation("fft: axis out of range");
    transformed[a] = true;
  }
  std::size_t stride = 1;
  std::vector<std::size_t> strides(shape.size());
  for (std::size_t a = shape.size(); a-- > 0;) {
    strides[a] = stride;
    stride *= shape[a];
  }
  for (std::size_t a = 0; a < shape.size(); ++a) {
    fftw_iodim d{static_cast<int>(shape[a]), static_cast<int>(strides[a]), static_cast<int>(strides[a])};
    (transformed[a] ? dims : loops).push_back(d);
  }
  // Planning with FFTW_ESTIMATE does not touch the buffer; a scratch array is
  // enough and FFTW_UNALIGNED allows executing on any std::vector later.
  ComplexArray scratch(stride);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  fftw_plan plan = fftw_plan_guru_dft(static_cast<int>(dims.size()), dims.data(),
                                      static_cast<int>(loops.size()), loops.data(), buf, buf, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plan) throw NumericalError("fftw plan creation failed");
  plan_cache().emplace(std::move(key), plan);
  return plan;
}

void execute(ComplexArray& data, const std::vector<std::size_t>& shape,
             const std::vector<std::size_t>& axes, int sign) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  if (data.size() != n) throw ContractViolation("fft: data size does not match shape");
  if (axes.empty()) return;
  auto plan = get_plan(shape, axes, sign);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace

void fft_forward(ComplexArray& data, const std::vector<std::size_t>& shape,
                 const std::vector<std::size_t>& axes) {
  execute(data, shape, axes, FFTW_FORWARD);
}

void fft_inverse(ComplexArray& data, const std::vector<std::size_t>& shape,
                 const std::vector<std::size_t>& axes) {
  execute(data, shape, axes, FFTW_BACKWARD);
  double len = 1.0;
  for (auto a : axes) len *= static_cast<double>(shape[a]);
  const double inv = 1.0 / len;
  for (auto& c : data) c *= inv;
}

std::vector<std::size_t> all_axes(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> a(shape.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = i;
  return a;
}

ComplexArray to_complex(const std::vector<double>& v) { return ComplexArray(v.begin(), v.end()); }

std::vector<double> real_part(const ComplexArray& c) {
  std::vector<double> r(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) r[i] = c[i].real();
  return r;
}

}  // namespace kmv
