#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <thread>
#include <atomic>
#include <vector>

#include "gnssrx/dsp.hpp"

using namespace gnssrx;

namespace {

template <class T>
IqBuffer<T> random_buffer(std::size_t n, std::uint64_t seed, double fs = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::complex<T>> v(n);
  for (auto& x : v) x = {static_cast<T>(u(rng)), static_cast<T>(u(rng))};
  return IqBuffer<T>(std::move(v), fs);
}

template <class T>
IqBuffer<T> make(std::initializer_list<std::complex<T>> xs) {
  return IqBuffer<T>(std::vector<std::complex<T>>(xs), 1.0);
}

// Direct DFT in long double, one bin.
template <class T>
std::complex<long double> dft_bin(const IqBuffer<T>& x, std::size_t k) {
  const std::size_t n = x.size();
  std::complex<long double> acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * i) % n) / n;
    acc += std::complex<long double>(x[i].real(), x[i].imag()) * std::complex<long double>(std::cos(ang), std::sin(ang));
  }
  return acc;
}

// out[τ] = Σ x[n]·conj(y[(n − τ) mod N]) in long double.
template <class T>
std::vector<std::complex<long double>> brute_correlation(const IqBuffer<T>& x, const IqBuffer<T>& y) {
  const std::size_t n = x.size();
  std::vector<std::complex<long double>> out(n);
  for (std::size_t tau = 0; tau < n; ++tau) {
    std::complex<long double> acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = x[i];
      const auto& b = y[(i + n - tau) % n];
      acc += std::complex<long double>(a.real(), a.imag()) * std::conj(std::complex<long double>(b.real(), b.imag()));
    }
    out[tau] = acc;
  }
  return out;
}

template <class C>
long double max_abs(const std::vector<C>& v) {
  long double m = 0;
  for (const auto& x : v) m = std::max<long double>(m, std::abs(std::complex<long double>(x.real(), x.imag())));
  return m;
}

}  // namespace

TEST(IqBuffer, RejectsEmptyNonFiniteAndBadRate) {
  EXPECT_THROW(IqBuffer<float>({}, 1.0), InvalidInput);
  EXPECT_THROW(IqBuffer<float>({{1.0f, NAN}}, 1.0), InvalidInput);
  EXPECT_THROW(IqBuffer<double>({{INFINITY, 0.0}}, 1.0), InvalidInput);
  EXPECT_THROW(IqBuffer<double>({{1.0, 0.0}}, 0.0), InvalidInput);
  EXPECT_THROW(IqBuffer<double>({{1.0, 0.0}}, -5.0), InvalidInput);
}

TEST(IqBuffer, PrecisionTagFollowsStorage) {
  EXPECT_EQ(make<float>({{1, 0}}).precision(), Precision::Single);
  EXPECT_EQ(make<double>({{1, 0}}).precision(), Precision::Double);
}

TEST(IqBuffer, SliceAndCast) {
  auto b = random_buffer<double>(10, 1, 2.0);
  auto s = b.slice(3, 4);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.sample_rate_hz(), 2.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s[i], b[i + 3]);
  EXPECT_THROW(b.slice(8, 3), InvalidInput);
  auto f = b.cast<float>();
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(f[i].real(), static_cast<float>(b[i].real()));
}

TEST(Fft, ImpulseGivesFlatSpectrum) {
  const auto s = fft(make<double>({{1, 0}, {0, 0}, {0, 0}, {0, 0}}));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(s[k], std::complex<double>(1, 0));
}

TEST(Fft, ConstantGivesDcOnly) {
  const auto s = fft(make<double>({{1, 0}, {1, 0}, {1, 0}, {1, 0}}));
  EXPECT_EQ(s[0], std::complex<double>(4, 0));
  for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(std::abs(s[k]), 0.0, 1e-15);
}

TEST(Fft, InverseOfDcIsConstant) {
  const auto x = ifft(Spectrum<double>({{4, 0}, {0, 0}, {0, 0}, {0, 0}}, 1.0));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(std::abs(x[k] - std::complex<double>(1, 0)), 0.0, 1e-15);
}

TEST(Fft, RejectsEmpty) {
  EXPECT_THROW(fft_plan<double>(0), InvalidInput);
  EXPECT_THROW(Spectrum<double>({}, 1.0), InvalidInput);
}

class FftSizes : public ::testing::TestWithParam<std::size_t> {};

TEST_P(FftSizes, MatchesDirectDftDouble) {
  const std::size_t n = GetParam();
  const auto x = random_buffer<double>(n, 100 + n);
  const auto s = fft(x);
  ASSERT_EQ(s.size(), n);
  long double scale = 0;
  std::vector<std::complex<long double>> ref(n);
  for (std::size_t k = 0; k < n; ++k) {
    ref[k] = dft_bin(x, k);
    scale = std::max(scale, std::abs(ref[k]));
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::complex<long double> got(s[k].real(), s[k].imag());
    EXPECT_LT(std::abs(got - ref[k]) / scale, 1e-12L) << "n=" << n << " k=" << k;
  }
}

TEST_P(FftSizes, RoundTripFloat) {
  const std::size_t n = GetParam();
  const auto x = random_buffer<float>(n, 7 + n);
  const auto y = ifft(fft(x));
  for (std::size_t i = 0; i < n; ++i) EXPECT_LT(std::abs(y[i] - x[i]), 1e-5f) << "n=" << n << " i=" << i;
}

// Powers of two, mixed radices, primes on both sides of the Bluestein
// limit, and the 1 ms code period at 8.184 MHz.
INSTANTIATE_TEST_SUITE_P(Lengths, FftSizes,
                         ::testing::Values(1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 16, 25, 30, 49, 64, 97, 121, 127, 128, 131,
                                           257, 262, 500, 1000, 1023, 1024, 2046, 8184));

TEST(Fft, Length81840MatchesDftAtSampledBins) {
  const std::size_t n = 81840;
  const auto x = random_buffer<float>(n, 81840);
  const auto s = fft(x);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 16; ++i) {
    const std::size_t k = rng() % n;
    const auto ref = dft_bin(x, k);
    const std::complex<long double> got(s[k].real(), s[k].imag());
    EXPECT_LT(std::abs(got - ref) / std::abs(ref), 1e-3L) << "k=" << k;
  }
}

TEST(Fft, FactorizationOf81840) {
  const auto f = factorize(81840);
  std::size_t prod = 1;
  for (auto p : f) prod *= p;
  EXPECT_EQ(prod, 81840u);
  EXPECT_FALSE(fft_plan<double>(81840)->uses_bluestein());
  EXPECT_TRUE(fft_plan<double>(131)->uses_bluestein());
}

class Parseval : public ::testing::TestWithParam<std::size_t> {};

TEST_P(Parseval, EnergyPreserved) {
  const std::size_t n = GetParam();
  auto check = [n](auto tag, double tol) {
    using T = decltype(tag);
    const auto x = random_buffer<T>(n, 3 * n);
    const auto s = fft(x);
    long double et = 0, ef = 0;
    for (std::size_t i = 0; i < n; ++i) {
      et += std::norm(std::complex<long double>(x[i].real(), x[i].imag()));
      ef += std::norm(std::complex<long double>(s[i].real(), s[i].imag()));
    }
    ef /= n;
    EXPECT_LT(std::abs(et - ef) / et, tol) << "n=" << n;
  };
  check(float{}, 1e-4);
  check(double{}, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Lengths, Parseval, ::testing::Values(4, 64, 1024, 81840));

TEST(Fft, Linearity) {
  const auto x = random_buffer<double>(360, 1);
  const auto y = random_buffer<double>(360, 2);
  const std::complex<double> a(0.5, -1.25), b(2.0, 0.75);
  std::vector<std::complex<double>> mix(360);
  for (std::size_t i = 0; i < 360; ++i) mix[i] = a * x[i] + b * y[i];
  const auto lhs = fft(IqBuffer<double>(mix, 1.0));
  const auto fx = fft(x), fy = fft(y);
  for (std::size_t k = 0; k < 360; ++k) EXPECT_LT(std::abs(lhs[k] - (a * fx[k] + b * fy[k])), 1e-10);
}

TEST(Fft, DispatchCounters) {
  const auto x = random_buffer<float>(64, 9);
  const auto before = thread_transform_dispatch_count();
  for (int i = 0; i < 10; ++i) (void)fft(x);
  EXPECT_EQ(thread_transform_dispatch_count() - before, 10u);
  const auto mid = thread_transform_dispatch_count();
  (void)ifft(fft(x));
  EXPECT_EQ(thread_transform_dispatch_count() - mid, 2u);
}

TEST(BatchFft, EqualsPerCallTransformsWithOneDispatch) {
  std::vector<IqBuffer<float>> bufs;
  for (int i = 0; i < 10; ++i) bufs.push_back(random_buffer<float>(1024, 500 + i));
  const auto before = thread_transform_dispatch_count();
  const auto batch = batch_fft(bufs);
  EXPECT_EQ(thread_transform_dispatch_count() - before, 1u);
  ASSERT_EQ(batch.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    const auto single = fft(bufs[i]);
    float scale = 0;
    for (std::size_t k = 0; k < 1024; ++k) scale = std::max(scale, std::abs(single[k]));
    for (std::size_t k = 0; k < 1024; ++k) EXPECT_LE(std::abs(batch[i][k] - single[k]), 1e-6f * scale);
  }
}

TEST(BatchFft, SingleBufferIdenticalToFft) {
  const std::vector<IqBuffer<double>> bufs{random_buffer<double>(300, 4)};
  const auto batch = batch_fft(bufs);
  const auto single = fft(bufs[0]);
  for (std::size_t k = 0; k < 300; ++k) EXPECT_EQ(batch[0][k], single[k]);
}

TEST(BatchFft, RejectsRaggedOrEmpty) {
  std::vector<IqBuffer<double>> ragged{random_buffer<double>(8, 1), random_buffer<double>(9, 2)};
  EXPECT_THROW(batch_fft(ragged), InvalidInput);
  EXPECT_THROW(batch_fft(std::vector<IqBuffer<double>>{}), InvalidInput);
}

TEST(PointwiseMultiply, IdentityAndConjugate) {
  const auto a = random_buffer<double>(16, 3);
  std::vector<std::complex<double>> ones(16, {1.0, 0.0});
  const auto r = pointwise_multiply(a, IqBuffer<double>(ones, 1.0), false);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(r[i], a[i]);
  const auto z = make<double>({{1, 1}});
  EXPECT_EQ(pointwise_multiply(z, z, true)[0], std::complex<double>(2, 0));
}

TEST(PointwiseMultiply, LengthMismatch) {
  EXPECT_THROW(pointwise_multiply(random_buffer<float>(4, 1), random_buffer<float>(5, 2), false), InvalidInput);
}

TEST(PointwiseMultiply, MatchesNaiveScalarLoopBitForBit) {
  const auto a = random_buffer<float>(81840, 11);
  const auto b = random_buffer<float>(81840, 12);
  for (bool conj : {false, true}) {
    const auto r = pointwise_multiply(a, b, conj);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const float br = b[i].real(), bi = conj ? -b[i].imag() : b[i].imag();
      const float re = a[i].real() * br - a[i].imag() * bi;
      const float im = a[i].real() * bi + a[i].imag() * br;
      ASSERT_EQ(r[i].real(), re) << i;
      ASSERT_EQ(r[i].imag(), im) << i;
    }
  }
}

TEST(PointwiseMultiply, InputsUnmodified) {
  const auto a = random_buffer<double>(100, 1);
  const auto b = random_buffer<double>(100, 2);
  const auto a0 = a, b0 = b;
  (void)pointwise_multiply(a, b, true);
  EXPECT_EQ(a, a0);
  EXPECT_EQ(b, b0);
}

TEST(ComputePath, ThresholdSelection) {
  EXPECT_EQ(select_compute_path(16, ComputePathPolicy{64}), ComputePath::ScalarLoop);
  EXPECT_EQ(select_compute_path(64, ComputePathPolicy{64}), ComputePath::Accelerated);
  EXPECT_EQ(select_compute_path(63, ComputePathPolicy{64}), ComputePath::ScalarLoop);
  EXPECT_EQ(select_compute_path(0, ComputePathPolicy{0}), ComputePath::Accelerated);
  EXPECT_EQ(ComputePathPolicy{}.min_iterations, 64u);
}

TEST(ComputePath, PathsAgreeForAllLengthsUpTo256) {
  const ComputePathPolicy scalar{1000000}, accel{0};
  for (std::size_t n = 1; n <= 256; ++n) {
    const auto a = random_buffer<float>(n, n);
    const auto b = random_buffer<float>(n, n + 1000);
    for (bool conj : {false, true}) {
      EXPECT_EQ(pointwise_multiply(a, b, conj, scalar), pointwise_multiply(a, b, conj, accel)) << n;
      EXPECT_EQ(dot_product(a, b, conj, scalar), dot_product(a, b, conj, accel)) << n;
    }
  }
}

TEST(DotProduct, SmallCases) {
  const auto ones = make<double>({{1, 0}, {1, 0}, {1, 0}, {1, 0}});
  EXPECT_EQ(dot_product(ones, ones, true), std::complex<double>(4, 0));
  const auto a = make<double>({{1, 0}, {1, 0}, {-1, 0}, {-1, 0}});
  const auto b = make<double>({{1, 0}, {-1, 0}, {1, 0}, {-1, 0}});
  EXPECT_EQ(dot_product(a, b, false), std::complex<double>(0, 0));
  EXPECT_THROW(dot_product(a, random_buffer<double>(3, 1), false), InvalidInput);
}

TEST(DotProduct, MatchesExtendedPrecisionOracle) {
  const auto a = random_buffer<float>(8192, 21);
  const auto b = random_buffer<float>(8192, 22);
  std::complex<long double> ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    ref += std::complex<long double>(a[i].real(), a[i].imag()) * std::conj(std::complex<long double>(b[i].real(), b[i].imag()));
  const auto got = dot_product(a, b, true);
  EXPECT_LT(std::abs(std::complex<long double>(got.real(), got.imag()) - ref) / std::abs(ref), 1e-4L);
}

TEST(MagnitudeSq, Values) {
  EXPECT_EQ(magnitude_sq(make<double>({{3, 4}}))[0], 25.0);
  const auto zeros = magnitude_sq(make<float>({{0, 0}, {0, 0}}));
  EXPECT_EQ(zeros, (std::vector<float>{0, 0}));
  const auto x = random_buffer<float>(1000, 5);
  const auto m = magnitude_sq(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float ref = x[i].real() * x[i].real() + x[i].imag() * x[i].imag();
    ASSERT_EQ(m[i], ref);
    ASSERT_GE(m[i], 0.0f);
  }
}

TEST(CircularCorrelate, ImpulseAutocorrelation) {
  std::vector<std::complex<double>> imp(8, {0, 0});
  imp[0] = {1, 0};
  const IqBuffer<double> x(imp, 1.0);
  for (auto method : {CorrelationMethod::Direct, CorrelationMethod::FrequencyDomain}) {
    const auto c = circular_correlate(x, x, method);
    EXPECT_NEAR(std::abs(c.values[0] - std::complex<double>(1, 0)), 0.0, 1e-15);
    for (std::size_t k = 1; k < 8; ++k) EXPECT_NEAR(std::abs(c.values[k]), 0.0, 1e-15);
  }
}

TEST(CircularCorrelate, DirectMatchesBruteForceAndCounts) {
  const auto x = random_buffer<double>(64, 31);
  const auto y = random_buffer<double>(64, 32);
  const auto ref = brute_correlation(x, y);
  const auto c = circular_correlate(x, y, CorrelationMethod::Direct);
  EXPECT_EQ(c.multiplications, 64u * 64u);
  const auto scale = max_abs(ref);
  for (std::size_t k = 0; k < 64; ++k)
    EXPECT_LT(std::abs(std::complex<long double>(c.values[k].real(), c.values[k].imag()) - ref[k]) / scale, 1e-12L);
}

TEST(CircularCorrelate, FrequencyDomainMatchesBruteForceLength64) {
  const auto x = random_buffer<float>(64, 41);
  const auto y = random_buffer<float>(64, 42);
  const auto ref = brute_correlation(x, y);
  const auto c = circular_correlate(x, y, CorrelationMethod::FrequencyDomain);
  const auto scale = max_abs(ref);
  for (std::size_t k = 0; k < 64; ++k)
    EXPECT_LT(std::abs(std::complex<long double>(c.values[k].real(), c.values[k].imag()) - ref[k]) / scale, 1e-4L);
}

TEST(CircularCorrelate, MethodsAgreeForEveryLengthUpTo512) {
  for (std::size_t n = 1; n <= 512; n += (n < 64 ? 1 : 7)) {
    const auto x = random_buffer<double>(n, 7000 + n);
    const auto y = random_buffer<double>(n, 9000 + n);
    const auto d = circular_correlate(x, y, CorrelationMethod::Direct);
    const auto f = circular_correlate(x, y, CorrelationMethod::FrequencyDomain);
    double scale = 0;
    for (std::size_t k = 0; k < n; ++k) scale = std::max(scale, std::abs(d.values[k]));
    for (std::size_t k = 0; k < n; ++k) ASSERT_LT(std::abs(d.values[k] - f.values[k]) / scale, 1e-10) << n;
  }
}

TEST(CircularCorrelate, LengthMismatch) {
  EXPECT_THROW(circular_correlate(random_buffer<float>(8, 1), random_buffer<float>(9, 1), CorrelationMethod::Direct),
               InvalidInput);
}

TEST(CircularCorrelate, MultiplicationAccounting) {
  EXPECT_EQ(direct_correlation_multiplications(81840), 6697785600ULL);
  const auto x = random_buffer<float>(4096, 1);
  const auto y = random_buffer<float>(4096, 2);
  EXPECT_EQ(circular_correlate(x, y, CorrelationMethod::Direct).multiplications, 4096ULL * 4096ULL);
  const auto f = circular_correlate(x, y, CorrelationMethod::FrequencyDomain);
  EXPECT_EQ(f.multiplications, frequency_domain_correlation_multiplications<float>(4096));
  EXPECT_LT(f.multiplications * 50, direct_correlation_multiplications(4096));
}

TEST(FftPlan, ConcurrentUseIsSafe) {
  const auto x = random_buffer<double>(1000, 77);
  const auto ref = fft(x);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i)
        if (!(fft(x) == ref)) ++mismatches;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}
