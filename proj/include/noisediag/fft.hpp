#pragma once

// Thin FFTW wrapper for the batched real transforms the spectral metrics
// need. Forward transforms are unnormalized; inverse transforms divide by
// the transform length so irfft(rfft(x)) == x.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "noisediag/error.hpp"

namespace noisediag::fft {

using complex = std::complex<double>;

namespace detail {

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
class AlignedBuffer {
public:
  explicit AlignedBuffer(std::size_t n) : size_(n), ptr_(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)))) {
    if (!ptr_) throw std::bad_alloc();
  }
  T* data() noexcept { return ptr_.get(); }
  std::size_t size() const noexcept { return size_; }

private:
  std::size_t size_;
  std::unique_ptr<T, FftwFree> ptr_;
};

enum class Kind { r2c_2d, c2r_2d, r2c_axis, c2r_axis };

// FFTW's planner is not thread-safe but executing an existing plan on new
// arrays is. Plans are created once per geometry under a lock and reused.
class PlanCache {
public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(Kind kind, std::size_t a, std::size_t b, std::size_t c) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(kind, a, b, c);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    fftw_plan plan = create(kind, a, b, c);
    if (!plan) throw internal_error("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

private:
  PlanCache() = default;

  // (a, b, c) = (count, H, W) for 2-D kinds and (outer, n, inner) for axis kinds.
  static fftw_plan create(Kind kind, std::size_t a, std::size_t b, std::size_t c) {
    const int flags = FFTW_ESTIMATE;
    if (kind == Kind::r2c_2d || kind == Kind::c2r_2d) {
      const int n[2] = {static_cast<int>(b), static_cast<int>(c)};
      const std::size_t real_len = b * c;
      const std::size_t cplx_len = b * (c / 2 + 1);
      AlignedBuffer<double> real(a * real_len);
      AlignedBuffer<fftw_complex> cplx(a * cplx_len);
      if (kind == Kind::r2c_2d)
        return fftw_plan_many_dft_r2c(2, n, static_cast<int>(a), real.data(), nullptr, 1, static_cast<int>(real_len),
                                      cplx.data(), nullptr, 1, static_cast<int>(cplx_len), flags);
      return fftw_plan_many_dft_c2r(2, n, static_cast<int>(a), cplx.data(), nullptr, 1, static_cast<int>(cplx_len),
                                    real.data(), nullptr, 1, static_cast<int>(real_len), flags | FFTW_DESTROY_INPUT);
    }
    const std::size_t k = b / 2 + 1;
    AlignedBuffer<double> real(a * b * c);
    AlignedBuffer<fftw_complex> cplx(a * k * c);
    const int inner = static_cast<int>(c);
    if (kind == Kind::r2c_axis) {
      fftw_iodim dims{static_cast<int>(b), inner, inner};
      fftw_iodim loops[2] = {{static_cast<int>(a), static_cast<int>(b * c), static_cast<int>(k * c)}, {inner, 1, 1}};
      return fftw_plan_guru_dft_r2c(1, &dims, 2, loops, real.data(), cplx.data(), flags);
    }
    fftw_iodim dims{static_cast<int>(b), inner, inner};
    fftw_iodim loops[2] = {{static_cast<int>(a), static_cast<int>(k * c), static_cast<int>(b * c)}, {inner, 1, 1}};
    return fftw_plan_guru_dft_c2r(1, &dims, 2, loops, cplx.data(), real.data(), flags | FFTW_DESTROY_INPUT);
  }

  std::mutex mutex_;
  std::map<std::tuple<Kind, std::size_t, std::size_t, std::size_t>, fftw_plan> plans_;
};

inline std::vector<complex> to_complex(AlignedBuffer<fftw_complex>& buf) {
  std::vector<complex> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = {buf.data()[i][0], buf.data()[i][1]};
  return out;
}

inline void from_complex(std::span<const complex> in, AlignedBuffer<fftw_complex>& buf) {
  for (std::size_t i = 0; i < in.size(); ++i) {
    buf.data()[i][0] = in[i].real();
    buf.data()[i][1] = in[i].imag();
  }
}

} // namespace detail

/// 2-D real FFT of `count` contiguous H x W slices. Output holds
/// count x H x (W/2 + 1) bins, row-major.
inline std::vector<complex> rfft2_slices(std::span<const double> data, std::size_t count, std::size_t height,
                                         std::size_t width) {
  if (data.size() != count * height * width) throw internal_error("rfft2_slices: size mismatch");
  detail::AlignedBuffer<double> in(data.size());
  std::copy(data.begin(), data.end(), in.data());
  detail::AlignedBuffer<fftw_complex> out(count * height * (width / 2 + 1));
  fftw_execute_dft_r2c(detail::PlanCache::instance().get(detail::Kind::r2c_2d, count, height, width), in.data(),
                       out.data());
  return detail::to_complex(out);
}

/// Inverse of rfft2_slices, scaled by 1/(H*W).
inline std::vector<double> irfft2_slices(std::span<const complex> spectrum, std::size_t count, std::size_t height,
                                         std::size_t width) {
  if (spectrum.size() != count * height * (width / 2 + 1)) throw internal_error("irfft2_slices: size mismatch");
  detail::AlignedBuffer<fftw_complex> in(spectrum.size());
  detail::from_complex(spectrum, in);
  detail::AlignedBuffer<double> out(count * height * width);
  fftw_execute_dft_c2r(detail::PlanCache::instance().get(detail::Kind::c2r_2d, count, height, width), in.data(),
                       out.data());
  const double scale = 1.0 / static_cast<double>(height * width);
  std::vector<double> result(out.size());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = out.data()[i] * scale;
  return result;
}

/// 1-D real FFT along the middle axis of a row-major (outer, n, inner) array.
/// Output is (outer, n/2 + 1, inner).
inline std::vector<complex> rfft_axis(std::span<const double> data, std::size_t outer, std::size_t n,
                                      std::size_t inner) {
  if (data.size() != outer * n * inner) throw internal_error("rfft_axis: size mismatch");
  detail::AlignedBuffer<double> in(data.size());
  std::copy(data.begin(), data.end(), in.data());
  detail::AlignedBuffer<fftw_complex> out(outer * (n / 2 + 1) * inner);
  fftw_execute_dft_r2c(detail::PlanCache::instance().get(detail::Kind::r2c_axis, outer, n, inner), in.data(),
                       out.data());
  return detail::to_complex(out);
}

/// Inverse of rfft_axis, scaled by 1/n.
inline std::vector<double> irfft_axis(std::span<const complex> spectrum, std::size_t outer, std::size_t n,
                                      std::size_t inner) {
  if (spectrum.size() != outer * (n / 2 + 1) * inner) throw internal_error("irfft_axis: size mismatch");
  detail::AlignedBuffer<fftw_complex> in(spectrum.size());
  detail::from_complex(spectrum, in);
  detail::AlignedBuffer<double> out(outer * n * inner);
  fftw_execute_dft_c2r(detail::PlanCache::instance().get(detail::Kind::c2r_axis, outer, n, inner), in.data(),
                       out.data());
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> result(out.size());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = out.data()[i] * scale;
  return result;
}

} // namespace noisediag::fft
