#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "rftl/nn.hpp"

namespace rftl::nn {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'R', 'F', 'T', 'L', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw FormatError("checkpoint truncated");
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  }
  pos += sizeof(U);
  return v;
}

}  // namespace

void ModelCheckpoint::validate() const {
  std::vector<ParamCount> layout;
  try {
    layout = parameter_layout(input, specs);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint layer chain invalid: ") + e.what());
  }
  if (weights.size() != specs.size() || biases.size() != specs.size() || trainable.size() != specs.size()) {
    throw FormatError("checkpoint per-layer arrays differ from layer count");
  }
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (weights[l].size() != layout[l].weights || biases[l].size() != layout[l].biases) {
      throw FormatError("checkpoint layer " + std::to_string(l) + " weight shape mismatch");
    }
  }
  const auto out = infer_shapes(input, specs).back().numel();
  if (!class_names.empty() && class_names.size() != out) {
    throw FormatError("checkpoint class names differ from output width");
  }
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  ckpt.validate();
  json layers = json::array();
  for (std::size_t l = 0; l < ckpt.specs.size(); ++l) {
    const auto& s = ckpt.specs[l];
    layers.push_back({{"kind", to_string(s.kind)},
                      {"kernel", {s.kernel_h, s.kernel_w}},
                      {"out", s.out},
                      {"dropout_rate", s.dropout_rate},
                      {"weight_count", ckpt.weights[l].size()},
                      {"bias_count", ckpt.biases[l].size()},
                      {"trainable", static_cast<bool>(ckpt.trainable[l])}});
  }
  const auto& p = ckpt.provenance;
  json header = {
      {"format", "rftl-checkpoint"},
      {"input", {ckpt.input.c, ckpt.input.h, ckpt.input.w}},
      {"layers", layers},
      {"class_names", ckpt.class_names},
      {"provenance",
       {{"dataset", p.dataset},
        {"mode", p.mode},
        {"epoch", p.epoch},
        {"val_loss", std::isnan(p.val_loss) ? json(nullptr) : json(p.val_loss)},
        {"seed", p.seed}}},
  };
  const std::string text = header.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(blob, kCheckpointVersion);
  put_le<std::uint64_t>(blob, text.size());
  blob += text;
  for (std::size_t l = 0; l < ckpt.specs.size(); ++l) {
    for (double w : ckpt.weights[l]) put_le<std::uint64_t>(blob, std::bit_cast<std::uint64_t>(w));
    for (double b : ckpt.biases[l]) put_le<std::uint64_t>(blob, std::bit_cast<std::uint64_t>(b));
  }
  std::ofstream out(path, std::ios::binary);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  const std::string blob{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("'" + path.string() + "' is not an rftl checkpoint");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(blob, pos);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  const auto header_len = get_le<std::uint64_t>(blob, pos);
  if (pos + header_len > blob.size()) throw FormatError("checkpoint header truncated");

  ModelCheckpoint c;
  std::vector<std::pair<std::size_t, std::size_t>> counts;
  try {
    const json h = json::parse(blob.substr(pos, header_len));
    pos += header_len;
    const auto& in_shape = h.at("input");
    c.input = {in_shape.at(0).get<int>(), in_shape.at(1).get<int>(), in_shape.at(2).get<int>()};
    for (const auto& l : h.at("layers")) {
      LayerSpec s;
      s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      s.kernel_h = l.at("kernel").at(0).get<int>();
      s.kernel_w = l.at("kernel").at(1).get<int>();
      s.out = l.at("out").get<int>();
      s.dropout_rate = l.at("dropout_rate").get<double>();
      c.specs.push_back(s);
      c.trainable.push_back(l.at("trainable").get<bool>());
      counts.emplace_back(l.at("weight_count").get<std::size_t>(), l.at("bias_count").get<std::size_t>());
    }
    c.class_names = h.at("class_names").get<std::vector<std::string>>();
    const auto& p = h.at("provenance");
    c.provenance.dataset = p.at("dataset").get<std::string>();
    c.provenance.mode = p.at("mode").get<std::string>();
    c.provenance.epoch = p.at("epoch").get<int>();
    c.provenance.val_loss =
        p.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN() : p.at("val_loss").get<double>();
    c.provenance.seed = p.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint header: " + std::string(e.what()));
  }

  std::vector<ParamCount> layout;
  try {
    layout = parameter_layout(c.input, c.specs);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint layer chain invalid: ") + e.what());
  }
  for (std::size_t l = 0; l < layout.size(); ++l) {
    if (counts[l].first != layout[l].weights || counts[l].second != layout[l].biases) {
      throw FormatError("checkpoint layer " + std::to_string(l) + " shape field disagrees with its spec");
    }
    c.weights.emplace_back(layout[l].weights);
    c.biases.emplace_back(layout[l].biases);
    for (auto& w : c.weights.back()) w = std::bit_cast<double>(get_le<std::uint64_t>(blob, pos));
    for (auto& b : c.biases.back()) b = std::bit_cast<double>(get_le<std::uint64_t>(blob, pos));
  }
  if (pos != blob.size()) throw FormatError("checkpoint has trailing bytes");
  c.validate();
  return c;
}

}  // namespace rftl::nn
