#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "rftl/dataspec.hpp"

namespace rftl::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kMetaExt = ".sigmf-meta";
constexpr const char* kDataExt = ".sigmf-data";

void put_f32_le(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed SigMF metadata '" + p.string() + "': " + e.what());
  }
}

std::vector<sigsynth::cplx> decode_cf32(const fs::path& data_path) {
  const auto bytes = read_bytes(data_path);
  if (bytes.size() % 8 != 0) {
    throw FormatError("'" + data_path.string() + "' is not a whole number of cf32 samples");
  }
  std::vector<sigsynth::cplx> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {get_f32_le(&bytes[8 * i]), get_f32_le(&bytes[8 * i + 4])};
  }
  return out;
}

void check_core_global(const json& meta, const fs::path& p) {
  if (!meta.is_object() || !meta.contains("global") || !meta["global"].is_object()) {
    throw FormatError("'" + p.string() + "' has no global object");
  }
  const auto& g = meta["global"];
  if (!g.contains("core:datatype") || !g["core:datatype"].is_string()) {
    throw FormatError("'" + p.string() + "' lacks core:datatype");
  }
  if (g["core:datatype"] != "cf32_le") {
    throw FormatError("'" + p.string() + "': unsupported datatype " + g["core:datatype"].dump());
  }
  if (!g.contains("core:version")) throw FormatError("'" + p.string() + "' lacks core:version");
}

json params_to_json(const sigsynth::ModParams& p) {
  return {{"symbol_order", p.symbol_order},       {"excess_bandwidth", p.excess_bandwidth},
          {"symbol_overlap", p.symbol_overlap},   {"carrier_spacing", p.carrier_spacing},
          {"beta", p.beta},                       {"mod_index", p.mod_index}};
}

sigsynth::ModParams params_from_json(const json& j) {
  sigsynth::ModParams p;
  p.symbol_order = j.at("symbol_order").get<int>();
  p.excess_bandwidth = j.at("excess_bandwidth").get<double>();
  p.symbol_overlap = j.at("symbol_overlap").get<int>();
  p.carrier_spacing = j.at("carrier_spacing").get<double>();
  p.beta = j.at("beta").get<double>();
  p.mod_index = j.at("mod_index").get<double>();
  return p;
}

json window_to_json(const DomainWindow& w) {
  return {{"label", w.label}, {"snr_db", {w.snr_db.lo, w.snr_db.hi}}, {"fo_frac", {w.fo_frac.lo, w.fo_frac.hi}}};
}

DomainWindow window_from_json(const json& j) {
  DomainWindow w;
  w.label = j.at("label").get<std::string>();
  w.snr_db = {j.at("snr_db").at(0).get<double>(), j.at("snr_db").at(1).get<double>()};
  w.fo_frac = {j.at("fo_frac").at(0).get<double>(), j.at("fo_frac").at(1).get<double>()};
  return w;
}

std::string recording_base(const Dataset& ds, const std::string& cls) {
  std::string name = ds.name.empty() ? "dataset" : ds.name;
  std::replace(name.begin(), name.end(), '/', '_');
  return name + "." + cls;
}

}  // namespace

void write_sigmf(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::vector<std::size_t>> by(ds.classes.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const int l = ds.examples[i].label;
    if (l < 0 || static_cast<std::size_t>(l) >= ds.classes.size()) {
      throw Error("write_sigmf: example " + std::to_string(ds.examples[i].id) + " is unlabeled");
    }
    by[static_cast<std::size_t>(l)].push_back(i);
  }

  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    const std::string base = recording_base(ds, ds.classes[c]);
    json global = {
        {"core:datatype", "cf32_le"},
        {"core:version", "1.0.0"},
        {"core:sample_rate", sigsynth::kMasterSampleRate},
        {"core:num_channels", 1},
        {"core:extensions", json::array({{{"name", "rftl"}, {"version", "1.0.0"}, {"optional", true}}})},
        {"rftl:dataset", ds.name},
        {"rftl:classes", ds.classes},
        {"rftl:class_index", c},
        {"rftl:frame_len", ds.frame_len},
        {"rftl:count", by[c].size()},
    };
    if (ds.bounds) global["rftl:bounds"] = window_to_json(*ds.bounds);

    json annotations = json::array();
    std::vector<unsigned char> bytes;
    bytes.reserve(by[c].size() * ds.frame_len * 8);
    std::size_t start = 0;
    for (auto i : by[c]) {
      const auto& e = ds.examples[i];
      if (e.frame.size() != ds.frame_len) throw Error("write_sigmf: frame length differs from dataset");
      annotations.push_back({
          {"core:sample_start", start},
          {"core:sample_count", e.frame.size()},
          {"core:label", e.meta.class_name},
          {"rftl:id", e.id},
          {"rftl:index", i},
          {"rftl:snr_db", e.meta.snr_db},
          {"rftl:fo_frac", e.meta.fo_frac},
          {"rftl:phase0", e.meta.phase0},
          {"rftl:sps", e.meta.sps},
          {"rftl:seed", e.meta.seed},
          {"rftl:params", params_to_json(e.meta.params)},
      });
      for (const auto& s : e.frame.samples) {
        put_f32_le(bytes, s.real());
        put_f32_le(bytes, s.imag());
      }
      start += e.frame.size();
    }
    const json meta = {{"global", global},
                       {"captures", json::array({{{"core:sample_start", 0}}})},
                       {"annotations", annotations}};

    std::ofstream mo(dir / (base + kMetaExt));
    mo << meta.dump(1) << '\n';
    std::ofstream dout(dir / (base + kDataExt), std::ios::binary);
    dout.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!mo || !dout) throw Error("write_sigmf: failed writing '" + base + "'");
  }
}

Dataset read_sigmf(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("'" + dir.string() + "' is not a dataset directory");
  std::vector<fs::path> metas;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == kMetaExt) metas.push_back(entry.path());
  }
  std::sort(metas.begin(), metas.end());
  if (metas.empty()) throw FormatError("no SigMF recordings in '" + dir.string() + "'");

  Dataset ds;
  std::vector<std::pair<std::size_t, Example>> indexed;
  bool first = true;
  for (const auto& mp : metas) {
    const json meta = read_json(mp);
    check_core_global(meta, mp);
    const auto& g = meta["global"];
    try {
      const auto classes = g.at("rftl:classes").get<std::vector<std::string>>();
      const auto frame_len = g.at("rftl:frame_len").get<std::size_t>();
      if (first) {
        ds.name = g.at("rftl:dataset").get<std::string>();
        ds.classes = classes;
        ds.frame_len = frame_len;
        if (g.contains("rftl:bounds")) ds.bounds = window_from_json(g["rftl:bounds"]);
        first = false;
      } else if (classes != ds.classes || frame_len != ds.frame_len) {
        throw FormatError("'" + mp.string() + "' disagrees with sibling recordings");
      }
      const int label = g.at("rftl:class_index").get<int>();

      auto data_path = mp;
      data_path.replace_extension(kDataExt);
      const auto samples = decode_cf32(data_path);
      const auto& ann = meta.at("annotations");
      std::size_t expected = 0;
      for (const auto& a : ann) expected += a.at("core:sample_count").get<std::size_t>();
      if (expected != samples.size() || ann.size() != g.at("rftl:count").get<std::size_t>()) {
        throw FormatError("length mismatch in '" + mp.string() + "': metadata describes " +
                          std::to_string(expected) + " samples, binary holds " +
                          std::to_string(samples.size()));
      }
      for (const auto& a : ann) {
        const auto start = a.at("core:sample_start").get<std::size_t>();
        const auto count = a.at("core:sample_count").get<std::size_t>();
        if (count != ds.frame_len || start + count > samples.size()) {
          throw FormatError("bad annotation extent in '" + mp.string() + "'");
        }
        Example e;
        e.id = a.at("rftl:id").get<std::uint64_t>();
        e.label = label;
        e.meta.class_name = a.at("core:label").get<std::string>();
        e.meta.snr_db = a.at("rftl:snr_db").get<double>();
        e.meta.fo_frac = a.at("rftl:fo_frac").get<double>();
        e.meta.phase0 = a.at("rftl:phase0").get<double>();
        e.meta.sps = a.at("rftl:sps").get<int>();
        e.meta.seed = a.at("rftl:seed").get<std::uint64_t>();
        e.meta.params = params_from_json(a.at("rftl:params"));
        e.frame.samples.assign(samples.begin() + static_cast<long>(start),
                               samples.begin() + static_cast<long>(start + count));
        indexed.emplace_back(a.at("rftl:index").get<std::size_t>(), std::move(e));
      }
    } catch (const json::exception& e) {
      throw FormatError("malformed rftl metadata in '" + mp.string() + "': " + e.what());
    }
  }
  std::sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < indexed.size(); ++i) {
    if (indexed[i].first != i) throw FormatError("example indices in '" + dir.string() + "' are not contiguous");
    ds.examples.push_back(std::move(indexed[i].second));
  }
  return ds;
}

Dataset import_sigmf(const fs::path& base, std::size_t frame_len) {
  if (frame_len == 0) throw Error("frame length must be >= 1");
  auto meta_path = base;
  meta_path += kMetaExt;
  auto data_path = base;
  data_path += kDataExt;
  const json meta = read_json(meta_path);
  check_core_global(meta, meta_path);
  const auto samples = decode_cf32(data_path);

  Dataset ds;
  ds.name = base.filename().string();
  ds.frame_len = frame_len;
  const std::size_t frames = samples.size() / frame_len;
  for (std::size_t f = 0; f < frames; ++f) {
    Example e;
    e.id = f;
    e.label = -1;
    e.frame.samples.assign(samples.begin() + static_cast<long>(f * frame_len),
                           samples.begin() + static_cast<long>((f + 1) * frame_len));
    e.frame.validate();
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

}  // namespace rftl::data
