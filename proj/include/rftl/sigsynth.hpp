#pragma once

// Complex-baseband synthesis for the 23-class modulation bank plus the
// impairment chain (constant frequency offset, AWGN at a requested SNR).

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rftl/common.hpp"

namespace rftl::sigsynth {

using cplx = std::complex<double>;

/// Nominal master sample rate. Carrier spacings in Hz are divided by this.
inline constexpr double kMasterSampleRate = 1.0e6;

/// Cutoff of the analog message low-pass filter, as a fraction of the sample rate.
inline constexpr double kMessageBandwidth = 0.1;

/// One complex-baseband observation. Row 0 of the 2xN view is I, row 1 is Q.
struct IQFrame {
  std::vector<cplx> samples;

  IQFrame() = default;
  explicit IQFrame(std::vector<cplx> s) : samples(std::move(s)) {}

  std::size_t size() const noexcept { return samples.size(); }
  double i(std::size_t t) const { return samples[t].real(); }
  double q(std::size_t t) const { return samples[t].imag(); }
  double mean_power() const noexcept;
  double energy() const noexcept;

  /// Throws rftl::Error unless N >= 1 and every value is finite.
  void validate() const;

  bool operator==(const IQFrame&) const = default;
};

enum class Family { Linear, Fsk, Analog, Noise };

enum class Scheme {
  Psk, Oqpsk, Qam, Apsk,
  Fsk, Gfsk, Msk, Gmsk,
  Fm, AmDsb, AmDsbSc, AmLsb, AmUsb,
  Awgn,
};

/// Family-specific generation parameters; fields a family does not use stay 0.
struct ModParams {
  int symbol_order = 0;
  double excess_bandwidth = 0.0;
  int symbol_overlap = 0;
  double carrier_spacing = 0.0;  // fraction of the master sample rate
  double beta = 0.0;             // Gaussian BT product
  double mod_index = 0.0;

  bool operator==(const ModParams&) const = default;
};

/// Static description of one entry of the signal bank and its legal parameter space.
struct ClassInfo {
  std::string_view name;
  Family family;
  Scheme scheme;
  int symbol_order;           // linear only
  double carrier_spacing_hz;  // FSK only
  double index_lo;            // analog only
  double index_hi;
};

const std::vector<ClassInfo>& catalog();
const ClassInfo& class_info(std::string_view name);
bool is_known_class(std::string_view name) noexcept;

struct ModClass {
  std::string name;
  Family family = Family::Noise;
  Scheme scheme = Scheme::Awgn;
  ModParams params;

  /// Throws rftl::Error when params leave the parameter space of `name`.
  void validate() const;

  bool operator==(const ModClass&) const = default;
};

/// Draws a parameter record for `name`: discrete sets uniformly, ranges uniformly.
ModClass sample_modclass(std::string_view name, Rng& rng);

/// Builds a ModClass with explicit parameters and validates it.
ModClass make_modclass(std::string_view name, ModParams params);

struct ImpairmentSpec {
  double snr_db = 0.0;
  double fo_frac = 0.0;
  double phase0 = 0.0;

  void validate() const;
};

// -- pulse shaping -----------------------------------------------------------

/// Analytic root-raised-cosine response at `t` symbol periods (unnormalized, h(0) = 1-b+4b/pi).
double rrc_response(double t, double excess_bandwidth);

/// 2*overlap*sps+1 RRC taps, scaled so the center tap is 1 (the maximum).
std::vector<double> rrc_taps(double excess_bandwidth, int symbol_overlap, int sps);

/// Gaussian-shaped frequency pulse (BT = beta) spanning `overlap` symbols; sums to sps.
std::vector<double> gaussian_frequency_pulse(double beta, int overlap, int sps);

/// Unit-average-energy constellation for a linear scheme.
std::vector<cplx> constellation(Scheme scheme, int order);

// -- clean synthesis -----------------------------------------------------------

/// Linear modulation from explicit constellation indices. Output is cropped to
/// `frame_len` samples from the steady-state center of the filtered stream.
IQFrame synth_linear_symbols(const ModClass& mod, std::span<const int> symbols, int sps,
                             std::size_t frame_len);
IQFrame synth_linear(const ModClass& mod, std::size_t n_symbols, int sps, std::size_t frame_len,
                     Rng& rng);

/// Per-sample deviation in cycles/sample for an FSK-family class.
double fsk_deviation(const ModClass& mod, int sps);

/// Continuous-phase FSK from explicit +/-1 symbols, cropped like synth_linear_symbols.
IQFrame synth_fsk_symbols(const ModClass& mod, std::span<const int> symbols, int sps,
                          std::size_t frame_len);
IQFrame synth_fsk(const ModClass& mod, std::size_t n_symbols, int sps, std::size_t frame_len,
                  Rng& rng);

/// Unit-variance Gaussian noise low-pass filtered to kMessageBandwidth.
std::vector<double> analog_message(std::size_t n_samples, Rng& rng);

/// Applies the analog modulator to an explicit message; output has unit mean power.
IQFrame modulate_analog(const ModClass& mod, std::span<const double> message);
IQFrame synth_analog(const ModClass& mod, std::size_t n_samples, Rng& rng);

IQFrame synth_awgn_class(std::size_t n_samples, Rng& rng);

/// Symbols needed so a `frame_len` crop stays clear of filter transients.
std::size_t symbols_for_frame(const ModClass& mod, std::size_t frame_len, int sps);

/// Dispatches on family and rescales to exactly unit mean power.
IQFrame synthesize_clean(const ModClass& mod, std::size_t frame_len, int sps, Rng& rng);

// -- impairments ---------------------------------------------------------------

IQFrame apply_fo(const IQFrame& frame, double fo_frac, double phase0);
IQFrame apply_awgn(const IQFrame& frame, double snr_db, Rng& rng);
IQFrame impair(const IQFrame& clean, const ImpairmentSpec& spec, Rng& rng);

/// 10*log10(sum|clean|^2 / sum|noisy-clean|^2). Returns +infinity when the
/// two frames are identical.
double measure_snr(const IQFrame& clean, const IQFrame& noisy);

}  // namespace rftl::sigsynth
