#include "rftl/sigsynth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

namespace rftl {

ShortfallError::ShortfallError(std::string class_name, std::size_t needed, std::size_t available)
    : Error("shortfall for class '" + class_name + "': need " + std::to_string(needed) +
            ", have " + std::to_string(available)),
      class_name_(std::move(class_name)),
      needed_(needed),
      available_(available) {}

}  // namespace rftl

namespace rftl::sigsynth {

namespace {

constexpr double kPi = std::numbers::pi;

// Extra steady-state samples reserved so an offset rail (OQPSK) never reaches the transient.
int crop_guard(int sps) { return sps; }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void require_sps(int sps) { require(sps >= 2, "samples per symbol must be >= 2"); }

// y[n] = sum_k amps[k] * taps[n - k*sps - shift], where `taps` is indexed from 0.
// Only the window [start, start+len) of the full output is produced.
std::vector<double> shaped_window(std::span<const double> amps, int sps,
                                  std::span<const double> taps, std::size_t start,
                                  std::size_t len) {
  std::vector<double> y(len, 0.0);
  const auto L = static_cast<long>(taps.size());
  for (std::size_t k = 0; k < amps.size(); ++k) {
    const long origin = static_cast<long>(k) * sps;
    const long lo = std::max<long>(origin, static_cast<long>(start));
    const long hi = std::min<long>(origin + L, static_cast<long>(start + len));
    for (long n = lo; n < hi; ++n) y[n - start] += amps[k] * taps[n - origin];
  }
  return y;
}

// Center crop of the steady-state region of a symbol-rate stream filtered by
// an `pulse_len`-tap pulse. Returns the index of the first kept sample.
std::size_t steady_state_start(std::size_t n_symbols, int sps, std::size_t pulse_len,
                               std::size_t frame_len) {
  const long total = static_cast<long>(n_symbols) * sps;
  const long avail = total - static_cast<long>(pulse_len) + 1 - crop_guard(sps);
  if (frame_len == 0) throw Error("frame length must be >= 1");
  if (avail < static_cast<long>(frame_len)) {
    throw Error("n_symbols*sps (" + std::to_string(total) +
                ") too short for frame length " + std::to_string(frame_len) +
                " after transient removal");
  }
  return static_cast<std::size_t>(static_cast<long>(pulse_len) - 1 +
                                  (avail - static_cast<long>(frame_len)) / 2);
}

// RRC taps sampled at (n - center - delay)/sps, zero outside +-overlap symbols.
std::vector<double> rrc_taps_delayed(double beta, int overlap, int sps, double delay) {
  const int center = overlap * sps;
  const int extra = static_cast<int>(std::ceil(delay));
  std::vector<double> taps(static_cast<std::size_t>(2 * center + 1 + extra), 0.0);
  const double norm = rrc_response(0.0, beta);
  for (std::size_t n = 0; n < taps.size(); ++n) {
    const double offset = static_cast<double>(n) - center - delay;
    if (std::abs(offset) > center) continue;
    taps[n] = rrc_response(offset / sps, beta) / norm;
  }
  return taps;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool is_gaussian_shape(Scheme s) { return s == Scheme::Gfsk || s == Scheme::Gmsk; }

std::vector<cplx> analytic_signal(std::span<const double> x) {
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<cplx> spec;
  fft.fwd(spec, in);
  const std::size_t n = spec.size();
  for (std::size_t k = 1; k < n; ++k) {
    if (2 * k < n) spec[k] *= 2.0;
    else if (2 * k > n) spec[k] = 0.0;
  }
  std::vector<cplx> out;
  fft.inv(out, spec);
  return out;
}

void normalize_power(std::vector<cplx>& s) {
  double p = 0.0;
  for (const auto& v : s) p += std::norm(v);
  p /= static_cast<double>(s.size());
  if (!(p > 0.0)) throw Error("cannot normalize a zero-power frame");
  const double g = 1.0 / std::sqrt(p);
  for (auto& v : s) v *= g;
}

}  // namespace

// -- IQFrame -----------------------------------------------------------------

double IQFrame::energy() const noexcept {
  double e = 0.0;
  for (const auto& v : samples) e += std::norm(v);
  return e;
}

double IQFrame::mean_power() const noexcept {
  return samples.empty() ? 0.0 : energy() / static_cast<double>(samples.size());
}

void IQFrame::validate() const {
  require(!samples.empty(), "IQFrame must hold at least one sample");
  for (const auto& v : samples) {
    require(std::isfinite(v.real()) && std::isfinite(v.imag()), "IQFrame holds a non-finite sample");
  }
}

// -- catalog -------------------------------------------------------------------

const std::vector<ClassInfo>& catalog() {
  static const std::vector<ClassInfo> kCatalog = {
      {"BPSK", Family::Linear, Scheme::Psk, 2, 0, 0, 0},
      {"QPSK", Family::Linear, Scheme::Psk, 4, 0, 0, 0},
      {"PSK8", Family::Linear, Scheme::Psk, 8, 0, 0, 0},
      {"PSK16", Family::Linear, Scheme::Psk, 16, 0, 0, 0},
      {"OQPSK", Family::Linear, Scheme::Oqpsk, 4, 0, 0, 0},
      {"QAM16", Family::Linear, Scheme::Qam, 16, 0, 0, 0},
      {"QAM32", Family::Linear, Scheme::Qam, 32, 0, 0, 0},
      {"QAM64", Family::Linear, Scheme::Qam, 64, 0, 0, 0},
      {"APSK16", Family::Linear, Scheme::Apsk, 16, 0, 0, 0},
      {"APSK32", Family::Linear, Scheme::Apsk, 32, 0, 0, 0},
      {"FSK5k", Family::Fsk, Scheme::Fsk, 2, 5.0e3, 0, 0},
      {"FSK75k", Family::Fsk, Scheme::Fsk, 2, 75.0e3, 0, 0},
      {"GFSK5k", Family::Fsk, Scheme::Gfsk, 2, 5.0e3, 0, 0},
      {"GFSK75k", Family::Fsk, Scheme::Gfsk, 2, 75.0e3, 0, 0},
      {"MSK", Family::Fsk, Scheme::Msk, 2, 2.5e3, 0, 0},
      {"GMSK", Family::Fsk, Scheme::Gmsk, 2, 2.5e3, 0, 0},
      {"FM-NB", Family::Analog, Scheme::Fm, 0, 0, 0.05, 0.4},
      {"FM-WB", Family::Analog, Scheme::Fm, 0, 0, 0.825, 1.88},
      {"AM-DSB", Family::Analog, Scheme::AmDsb, 0, 0, 0.5, 0.9},
      {"AM-DSBSC", Family::Analog, Scheme::AmDsbSc, 0, 0, 0.5, 0.9},
      {"AM-LSB", Family::Analog, Scheme::AmLsb, 0, 0, 0.5, 0.9},
      {"AM-USB", Family::Analog, Scheme::AmUsb, 0, 0, 0.5, 0.9},
      {"AWGN", Family::Noise, Scheme::Awgn, 0, 0, 0, 0},
  };
  return kCatalog;
}

bool is_known_class(std::string_view name) noexcept {
  const auto& c = catalog();
  return std::any_of(c.begin(), c.end(), [&](const ClassInfo& i) { return i.name == name; });
}

const ClassInfo& class_info(std::string_view name) {
  for (const auto& info : catalog()) {
    if (info.name == name) return info;
  }
  throw Error("unknown modulation class '" + std::string(name) + "'");
}

void ModClass::validate() const {
  const auto& info = class_info(name);
  require(family == info.family && scheme == info.scheme, name + ": family/scheme mismatch");
  const auto& p = params;
  switch (family) {
    case Family::Linear:
      require(p.symbol_order == info.symbol_order, name + ": unsupported symbol order");
      require(p.excess_bandwidth == 0.35 || p.excess_bandwidth == 0.5,
              name + ": excess bandwidth must be 0.35 or 0.5");
      require(p.symbol_overlap >= 3 && p.symbol_overlap <= 5, name + ": symbol overlap outside [3,5]");
      break;
    case Family::Fsk:
      require(p.carrier_spacing == info.carrier_spacing_hz / kMasterSampleRate,
              name + ": carrier spacing mismatch");
      if (is_gaussian_shape(scheme)) {
        require(p.symbol_overlap >= 2 && p.symbol_overlap <= 4, name + ": symbol overlap outside {2,3,4}");
        require(p.beta >= 0.3 && p.beta <= 0.5, name + ": beta outside [0.3,0.5]");
      } else {
        require(p.symbol_overlap == 1, name + ": rectangular phase shape needs overlap 1");
      }
      break;
    case Family::Analog:
      require(p.mod_index >= info.index_lo && p.mod_index <= info.index_hi,
              name + ": modulation index outside its range");
      break;
    case Family::Noise:
      break;
  }
}

ModClass make_modclass(std::string_view name, ModParams params) {
  const auto& info = class_info(name);
  ModClass m{std::string(name), info.family, info.scheme, params};
  m.validate();
  return m;
}

ModClass sample_modclass(std::string_view name, Rng& rng) {
  const auto& info = class_info(name);
  ModParams p;
  switch (info.family) {
    case Family::Linear:
      p.symbol_order = info.symbol_order;
      p.excess_bandwidth = uniform_int(rng, 0, 1) == 0 ? 0.35 : 0.5;
      p.symbol_overlap = uniform_int(rng, 3, 5);
      break;
    case Family::Fsk:
      p.symbol_order = 2;
      p.carrier_spacing = info.carrier_spacing_hz / kMasterSampleRate;
      if (is_gaussian_shape(info.scheme)) {
        p.symbol_overlap = uniform_int(rng, 2, 4);
        p.beta = uniform(rng, 0.3, 0.5);
      } else {
        p.symbol_overlap = 1;
      }
      break;
    case Family::Analog:
      p.mod_index = uniform(rng, info.index_lo, info.index_hi);
      break;
    case Family::Noise:
      break;
  }
  return make_modclass(name, p);
}

void ImpairmentSpec::validate() const {
  require(std::isfinite(snr_db), "snr_db must be finite");
  require(fo_frac >= -0.5 && fo_frac < 0.5, "fo_frac must lie in [-0.5, 0.5)");
  require(std::isfinite(phase0), "phase0 must be finite");
}

// -- pulse shaping ---------------------------------------------------------------

double rrc_response(double t, double b) {
  if (std::abs(t) < 1e-12) return 1.0 - b + 4.0 * b / kPi;
  const double x = 4.0 * b * t;
  if (std::abs(1.0 - x * x) < 1e-9) {
    const double a = kPi / (4.0 * b);
    return b / std::numbers::sqrt2 * ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
  }
  const double num = std::sin(kPi * t * (1.0 - b)) + x * std::cos(kPi * t * (1.0 + b));
  return num / (kPi * t * (1.0 - x * x));
}

std::vector<double> rrc_taps(double excess_bandwidth, int symbol_overlap, int sps) {
  require(std::isfinite(excess_bandwidth) && excess_bandwidth > 0.0 && excess_bandwidth <= 1.0,
          "excess bandwidth must lie in (0, 1]");
  require(symbol_overlap >= 1, "symbol overlap must be >= 1");
  require_sps(sps);
  return rrc_taps_delayed(excess_bandwidth, symbol_overlap, sps, 0.0);
}

std::vector<double> gaussian_frequency_pulse(double beta, int overlap, int sps) {
  require(std::isfinite(beta) && beta > 0.0, "Gaussian beta must be positive");
  require(overlap >= 1, "symbol overlap must be >= 1");
  require_sps(sps);
  // Rectangular symbol pulse convolved with a Gaussian of bandwidth-time product beta.
  const double c = kPi * beta * std::sqrt(2.0 / std::log(2.0));
  const int len = overlap * sps + 1;
  const double center = 0.5 * (len - 1);
  std::vector<double> g(static_cast<std::size_t>(len));
  for (int n = 0; n < len; ++n) {
    const double t = (n - center) / sps;
    g[n] = 0.5 * (std::erf(c * (t + 0.5)) - std::erf(c * (t - 0.5)));
  }
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v *= sps / s;
  return g;
}

std::vector<cplx> constellation(Scheme scheme, int order) {
  std::vector<cplx> pts;
  switch (scheme) {
    case Scheme::Psk:
    case Scheme::Oqpsk: {
      require(order == 2 || order == 4 || order == 8 || order == 16, "unsupported PSK order");
      const double offset = order == 4 ? kPi / 4.0 : 0.0;
      for (int k = 0; k < order; ++k) pts.push_back(std::polar(1.0, offset + 2.0 * kPi * k / order));
      break;
    }
    case Scheme::Qam: {
      require(order == 16 || order == 32 || order == 64, "unsupported QAM order");
      // 32-QAM is the 6x6 cross: square grid without its four corners.
      const int side = order == 16 ? 4 : (order == 64 ? 8 : 6);
      for (int a = 0; a < side; ++a) {
        for (int b = 0; b < side; ++b) {
          const double re = 2.0 * a - (side - 1);
          const double im = 2.0 * b - (side - 1);
          if (order == 32 && std::abs(re) == 5.0 && std::abs(im) == 5.0) continue;
          pts.emplace_back(re, im);
        }
      }
      break;
    }
    case Scheme::Apsk: {
      require(order == 16 || order == 32, "unsupported APSK order");
      std::vector<std::pair<int, double>> rings = order == 16
          ? std::vector<std::pair<int, double>>{{4, 1.0}, {12, 2.57}}
          : std::vector<std::pair<int, double>>{{4, 1.0}, {12, 2.53}, {16, 4.30}};
      for (const auto& [count, radius] : rings) {
        for (int k = 0; k < count; ++k) {
          pts.push_back(std::polar(radius, kPi / count + 2.0 * kPi * k / count));
        }
      }
      break;
    }
    default:
      throw Error("constellation requested for a non-linear scheme");
  }
  double e = 0.0;
  for (const auto& p : pts) e += std::norm(p);
  const double g = 1.0 / std::sqrt(e / static_cast<double>(pts.size()));
  for (auto& p : pts) p *= g;
  return pts;
}

// -- linear --------------------------------------------------------------------

IQFrame synth_linear_symbols(const ModClass& mod, std::span<const int> symbols, int sps,
                             std::size_t frame_len) {
  require(mod.family == Family::Linear, mod.name + " is not a linear modulation");
  mod.validate();
  require_sps(sps);
  const auto points = constellation(mod.scheme, mod.params.symbol_order);
  const auto taps = rrc_taps(mod.params.excess_bandwidth, mod.params.symbol_overlap, sps);
  const std::size_t start = steady_state_start(symbols.size(), sps, taps.size(), frame_len);

  const double energy = std::inner_product(taps.begin(), taps.end(), taps.begin(), 0.0);
  const double gain = std::sqrt(sps / energy);

  std::vector<double> re(symbols.size()), im(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    require(symbols[k] >= 0 && symbols[k] < static_cast<int>(points.size()), "symbol index out of range");
    re[k] = points[symbols[k]].real() * gain;
    im[k] = points[symbols[k]].imag() * gain;
  }
  const auto i_rail = shaped_window(re, sps, taps, start, frame_len);
  const auto q_taps = mod.scheme == Scheme::Oqpsk
      ? rrc_taps_delayed(mod.params.excess_bandwidth, mod.params.symbol_overlap, sps, 0.5 * sps)
      : taps;
  const auto q_rail = shaped_window(im, sps, q_taps, start, frame_len);

  std::vector<cplx> out(frame_len);
  for (std::size_t n = 0; n < frame_len; ++n) out[n] = {i_rail[n], q_rail[n]};
  return IQFrame(std::move(out));
}

IQFrame synth_linear(const ModClass& mod, std::size_t n_symbols, int sps, std::size_t frame_len,
                     Rng& rng) {
  require(mod.family == Family::Linear, mod.name + " is not a linear modulation");
  std::uniform_int_distribution<int> pick(0, mod.params.symbol_order - 1);
  std::vector<int> symbols(n_symbols);
  for (auto& s : symbols) s = pick(rng);
  return synth_linear_symbols(mod, symbols, sps, frame_len);
}

// -- FSK -------------------------------------------------------------------------

double fsk_deviation(const ModClass& mod, int sps) {
  require_sps(sps);
  if (mod.scheme == Scheme::Msk || mod.scheme == Scheme::Gmsk) return 1.0 / (4.0 * sps);
  return mod.params.carrier_spacing;
}

IQFrame synth_fsk_symbols(const ModClass& mod, std::span<const int> symbols, int sps,
                          std::size_t frame_len) {
  require(mod.family == Family::Fsk, mod.name + " is not an FSK-family modulation");
  mod.validate();
  require_sps(sps);
  const auto pulse = is_gaussian_shape(mod.scheme)
      ? gaussian_frequency_pulse(mod.params.beta, mod.params.symbol_overlap, sps)
      : std::vector<double>(static_cast<std::size_t>(sps), 1.0);
  const std::size_t start = steady_state_start(symbols.size(), sps, pulse.size(), frame_len);
  const double dev = fsk_deviation(mod, sps);

  std::vector<double> amps(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    require(symbols[k] == 1 || symbols[k] == -1, "FSK symbols must be +1 or -1");
    amps[k] = symbols[k] * dev;
  }
  // Phase needs the whole history, so shape from sample 0 and integrate.
  const auto freq = shaped_window(amps, sps, pulse, 0, start + frame_len);
  std::vector<cplx> out(frame_len);
  double phase = 0.0;
  for (std::size_t n = 0; n < freq.size(); ++n) {
    phase += 2.0 * kPi * freq[n];
    if (n >= start) out[n - start] = std::polar(1.0, phase);
  }
  return IQFrame(std::move(out));
}

IQFrame synth_fsk(const ModClass& mod, std::size_t n_symbols, int sps, std::size_t frame_len,
                  Rng& rng) {
  std::uniform_int_distribution<int> bit(0, 1);
  std::vector<int> symbols(n_symbols);
  for (auto& s : symbols) s = bit(rng) ? 1 : -1;
  return synth_fsk_symbols(mod, symbols, sps, frame_len);
}

// -- analog ------------------------------------------------------------------------

std::vector<double> analog_message(std::size_t n_samples, Rng& rng) {
  // Hamming-windowed sinc low-pass, 63 taps.
  constexpr int kTaps = 63;
  constexpr int kMid = kTaps / 2;
  std::vector<double> h(kTaps);
  for (int n = 0; n < kTaps; ++n) {
    const double m = n - kMid;
    const double sinc = m == 0 ? 2.0 * kMessageBandwidth
                               : std::sin(2.0 * kPi * kMessageBandwidth * m) / (kPi * m);
    h[n] = sinc * (0.54 - 0.46 * std::cos(2.0 * kPi * n / (kTaps - 1)));
  }
  const double gain = 1.0 / std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> white(n_samples + kTaps - 1);
  for (auto& w : white) w = gauss(rng);
  std::vector<double> m(n_samples, 0.0);
  for (std::size_t t = 0; t < n_samples; ++t) {
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) acc += h[k] * white[t + kTaps - 1 - k];
    m[t] = acc * gain;
  }
  return m;
}

IQFrame modulate_analog(const ModClass& mod, std::span<const double> message) {
  require(mod.family == Family::Analog, mod.name + " is not an analog modulation");
  mod.validate();
  require(!message.empty(), "analog message is empty");
  const double mu = mod.params.mod_index;
  std::vector<cplx> out(message.size());
  switch (mod.scheme) {
    case Scheme::AmDsb:
      for (std::size_t t = 0; t < message.size(); ++t) out[t] = 1.0 + mu * message[t];
      break;
    case Scheme::AmDsbSc:
      for (std::size_t t = 0; t < message.size(); ++t) out[t] = mu * message[t];
      break;
    case Scheme::AmUsb:
    case Scheme::AmLsb: {
      const auto a = analytic_signal(message);
      const bool upper = mod.scheme == Scheme::AmUsb;
      for (std::size_t t = 0; t < message.size(); ++t) {
        out[t] = mu * (upper ? a[t] : std::conj(a[t]));
      }
      break;
    }
    case Scheme::Fm: {
      const double k = 2.0 * kPi * mu * kMessageBandwidth;
      double phase = 0.0;
      for (std::size_t t = 0; t < message.size(); ++t) {
        phase += k * message[t];
        out[t] = std::polar(1.0, phase);
      }
      break;
    }
    default:
      throw Error("unsupported analog scheme");
  }
  normalize_power(out);
  return IQFrame(std::move(out));
}

IQFrame synth_analog(const ModClass& mod, std::size_t n_samples, Rng& rng) {
  require(n_samples >= 1, "frame length must be >= 1");
  constexpr std::size_t kGuard = 64;
  const auto message = analog_message(n_samples + 2 * kGuard, rng);
  auto full = modulate_analog(mod, message);
  std::vector<cplx> out(full.samples.begin() + kGuard, full.samples.begin() + kGuard + n_samples);
  normalize_power(out);
  return IQFrame(std::move(out));
}

IQFrame synth_awgn_class(std::size_t n_samples, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  std::vector<cplx> out(n_samples);
  for (auto& v : out) {
    const double re = gauss(rng);
    v = {re, gauss(rng)};
  }
  return IQFrame(std::move(out));
}

// -- dispatch ------------------------------------------------------------------------

std::size_t symbols_for_frame(const ModClass& mod, std::size_t frame_len, int sps) {
  require_sps(sps);
  std::size_t pulse = 0;
  if (mod.family == Family::Linear) {
    pulse = static_cast<std::size_t>(2 * mod.params.symbol_overlap * sps + 1);
  } else if (mod.family == Family::Fsk) {
    pulse = is_gaussian_shape(mod.scheme)
        ? static_cast<std::size_t>(mod.params.symbol_overlap * sps + 1)
        : static_cast<std::size_t>(sps);
  } else {
    return 0;
  }
  const std::size_t needed = frame_len + pulse - 1 + static_cast<std::size_t>(crop_guard(sps));
  return (needed + sps - 1) / sps + 1;
}

IQFrame synthesize_clean(const ModClass& mod, std::size_t frame_len, int sps, Rng& rng) {
  IQFrame f;
  switch (mod.family) {
    case Family::Linear:
      f = synth_linear(mod, symbols_for_frame(mod, frame_len, sps), sps, frame_len, rng);
      break;
    case Family::Fsk:
      f = synth_fsk(mod, symbols_for_frame(mod, frame_len, sps), sps, frame_len, rng);
      break;
    case Family::Analog:
      f = synth_analog(mod, frame_len, rng);
      break;
    case Family::Noise:
      f = synth_awgn_class(frame_len, rng);
      break;
  }
  normalize_power(f.samples);
  return f;
}

// -- impairments -------------------------------------------------------------------------

IQFrame apply_fo(const IQFrame& frame, double fo_frac, double phase0) {
  require(std::isfinite(fo_frac) && fo_frac >= -0.5 && fo_frac < 0.5,
          "frequency offset must lie in [-0.5, 0.5)");
  require(std::isfinite(phase0), "phase0 must be finite");
  IQFrame out = frame;
  for (std::size_t t = 0; t < out.size(); ++t) {
    out.samples[t] *= std::polar(1.0, 2.0 * kPi * fo_frac * static_cast<double>(t) + phase0);
  }
  return out;
}

IQFrame apply_awgn(const IQFrame& frame, double snr_db, Rng& rng) {
  require(std::isfinite(snr_db), "snr_db must be finite");
  const double p = frame.mean_power();
  require(p > 0.0, "cannot set SNR on a zero-power frame");
  const double noise_var = p / std::pow(10.0, snr_db / 10.0);
  std::normal_distribution<double> gauss(0.0, std::sqrt(noise_var / 2.0));
  IQFrame out = frame;
  for (auto& v : out.samples) {
    const double re = gauss(rng);
    v += cplx(re, gauss(rng));
  }
  return out;
}

IQFrame impair(const IQFrame& clean, const ImpairmentSpec& spec, Rng& rng) {
  spec.validate();
  return apply_awgn(apply_fo(clean, spec.fo_frac, spec.phase0), spec.snr_db, rng);
}

double measure_snr(const IQFrame& clean, const IQFrame& noisy) {
  require(clean.size() == noisy.size(), "measure_snr needs frames of equal length");
  double signal = 0.0, noise = 0.0;
  for (std::size_t t = 0; t < clean.size(); ++t) {
    signal += std::norm(clean.samples[t]);
    noise += std::norm(noisy.samples[t] - clean.samples[t]);
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

}  // namespace rftl::sigsynth
