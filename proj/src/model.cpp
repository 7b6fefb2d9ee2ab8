#include "ltc/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <zlib.h>

#include "ltc/byte_io.hpp"

namespace ltc {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

ArchConfig ArchConfig::desk(int m, bool end_normalization, int hidden) {
  ArchConfig arch;
  arch.m = m;
  arch.layers = {{hidden, 9, 4, 4}, {hidden, 5, 2, 2}, {m, 5, 2, 2}};
  arch.end_normalization = end_normalization;
  return arch;
}

int ArchConfig::total_stride() const {
  int s = 1;
  for (const LayerSpec& l : layers) s *= l.stride;
  return s;
}

int ArchConfig::output_pad(std::size_t layer) const {
  const LayerSpec& l = layers[layer];
  return l.stride + 2 * l.pad - l.kernel;
}

void ArchConfig::validate() const {
  if (layers.empty()) fail(ErrorKind::kConfig, "architecture has no layers");
  if (layers.back().out_channels != m) {
    fail(ErrorKind::kConfig, "last encoder layer must produce m = " + std::to_string(m) + " maps");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.pad < 0) {
      fail(ErrorKind::kConfig, "invalid layer " + std::to_string(i));
    }
    const int op = output_pad(i);
    if (op < 0 || op >= l.stride) {
      fail(ErrorKind::kConfig, "layer " + std::to_string(i) +
                                   ": stride/pad/kernel admit no shape-preserving mirror");
    }
  }
}

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  auto gaussian = [&](Shape shape, double fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    Tensor t(shape);
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
  };
  auto gdn_init = [](Eigen::Index c) {
    GdnParams g{Tensor(Shape{1, c, 1, 1}, 1.0), Tensor(Shape{1, 1, c, c}, 1e-3)};
    for (Eigen::Index k = 0; k < c; ++k) g.gamma(0, 0, k, k) += 0.1;
    return g;
  };

  ModelParams p;
  const std::size_t layers = arch.layers.size();
  p.encoder.resize(layers);
  p.encoder_gdn.resize(layers);
  p.decoder.resize(layers);
  p.decoder_igdn.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerSpec& spec = arch.layers[l];
    const Eigen::Index in = arch.in_channels(l);
    const Eigen::Index out = spec.out_channels;
    const Eigen::Index k = spec.kernel;
    p.encoder[l].weight = gaussian(Shape{out, in, k, k}, double(in * k * k));
    p.encoder[l].bias = Tensor(Shape{1, out, 1, 1});
    if (arch.has_gdn(l)) p.encoder_gdn[l] = gdn_init(out);
  }
  for (std::size_t l = layers; l-- > 0;) {
    const LayerSpec& spec = arch.layers[l];
    const Eigen::Index in = arch.in_channels(l);
    const Eigen::Index out = spec.out_channels;
    const Eigen::Index k = spec.kernel;
    if (arch.has_gdn(l)) p.decoder_igdn[l] = gdn_init(out);
    p.decoder[l].weight = gaussian(Shape{out, in, k, k}, double(out * k * k));
    p.decoder[l].bias = Tensor(Shape{1, in, 1, 1});
  }
  const Shape maps{1, arch.m, 1, 1};
  p.log_delta = Tensor(maps);
  p.psi_mu = Tensor(maps);
  p.psi_log_b = Tensor(maps);
  p.mu_bar = Tensor(maps);
  return p;
}

namespace {

template <typename Params, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Params& p) {
  std::vector<std::pair<std::string, Ptr>> out;
  const std::size_t layers = p.encoder.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string i = std::to_string(l);
    out.emplace_back("enc.conv" + i + ".weight", &p.encoder[l].weight);
    out.emplace_back("enc.conv" + i + ".bias", &p.encoder[l].bias);
    if (p.encoder_gdn[l].beta.size() > 0) {
      out.emplace_back("enc.gdn" + i + ".beta", &p.encoder_gdn[l].beta);
      out.emplace_back("enc.gdn" + i + ".gamma", &p.encoder_gdn[l].gamma);
    }
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::string i = std::to_string(l);
    if (p.decoder_igdn[l].beta.size() > 0) {
      out.emplace_back("dec.igdn" + i + ".beta", &p.decoder_igdn[l].beta);
      out.emplace_back("dec.igdn" + i + ".gamma", &p.decoder_igdn[l].gamma);
    }
    out.emplace_back("dec.tconv" + i + ".weight", &p.decoder[l].weight);
    out.emplace_back("dec.tconv" + i + ".bias", &p.decoder[l].bias);
  }
  out.emplace_back("entropy.log_delta", &p.log_delta);
  out.emplace_back("entropy.psi_mu", &p.psi_mu);
  out.emplace_back("entropy.psi_log_b", &p.psi_log_b);
  out.emplace_back("entropy.mu_bar", &p.mu_bar);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> named_parameters(ModelParams& params) {
  return collect<ModelParams, Tensor*>(params);
}

std::vector<std::pair<std::string, const Tensor*>> named_parameters(const ModelParams& params) {
  return collect<const ModelParams, const Tensor*>(params);
}

ParamGroup parameter_group(const std::string& name) {
  if (name.starts_with("enc.") || name.starts_with("dec.")) return kTransformGroup;
  if (name == "entropy.log_delta") return kDeltaGroup;
  if (name == "entropy.psi_mu" || name == "entropy.psi_log_b") return kPsiGroup;
  return kNoGroup;
}

Eigen::Index parameter_count(const ModelParams& params) {
  Eigen::Index n = 0;
  for (const auto& [name, t] : named_parameters(params)) n += t->size();
  return n;
}

ModelVars bind(Graph& graph, const ArchConfig& arch, const ModelParams& params,
               unsigned trainable) {
  auto leaf = [&](const Tensor& t, ParamGroup group) {
    return (trainable & group) ? graph.parameter(t) : graph.constant(t);
  };
  ModelVars v;
  const std::size_t layers = arch.layers.size();
  v.encoder.resize(layers);
  v.encoder_gdn.resize(layers);
  v.decoder.resize(layers);
  v.decoder_igdn.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    v.encoder[l] = {leaf(params.encoder[l].weight, kTransformGroup),
                    leaf(params.encoder[l].bias, kTransformGroup)};
    v.decoder[l] = {leaf(params.decoder[l].weight, kTransformGroup),
                    leaf(params.decoder[l].bias, kTransformGroup)};
    if (arch.has_gdn(l)) {
      v.encoder_gdn[l] = {leaf(params.encoder_gdn[l].beta, kTransformGroup),
                          leaf(params.encoder_gdn[l].gamma, kTransformGroup)};
      v.decoder_igdn[l] = {leaf(params.decoder_igdn[l].beta, kTransformGroup),
                           leaf(params.decoder_igdn[l].gamma, kTransformGroup)};
    }
  }
  v.log_delta = leaf(params.log_delta, kDeltaGroup);
  v.psi_mu = leaf(params.psi_mu, kPsiGroup);
  v.psi_log_b = leaf(params.psi_log_b, kPsiGroup);
  return v;
}

std::vector<std::pair<std::string, Var>> named_vars(const ArchConfig& arch, const ModelVars& vars) {
  std::vector<std::pair<std::string, Var>> out;
  const std::size_t layers = arch.layers.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string i = std::to_string(l);
    out.emplace_back("enc.conv" + i + ".weight", vars.encoder[l].first);
    out.emplace_back("enc.conv" + i + ".bias", vars.encoder[l].second);
    if (arch.has_gdn(l)) {
      out.emplace_back("enc.gdn" + i + ".beta", vars.encoder_gdn[l].first);
      out.emplace_back("enc.gdn" + i + ".gamma", vars.encoder_gdn[l].second);
    }
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::string i = std::to_string(l);
    if (arch.has_gdn(l)) {
      out.emplace_back("dec.igdn" + i + ".beta", vars.decoder_igdn[l].first);
      out.emplace_back("dec.igdn" + i + ".gamma", vars.decoder_igdn[l].second);
    }
    out.emplace_back("dec.tconv" + i + ".weight", vars.decoder[l].first);
    out.emplace_back("dec.tconv" + i + ".bias", vars.decoder[l].second);
  }
  out.emplace_back("entropy.log_delta", vars.log_delta);
  out.emplace_back("entropy.psi_mu", vars.psi_mu);
  out.emplace_back("entropy.psi_log_b", vars.psi_log_b);
  return out;
}

Var encode_transform(Var x, const ArchConfig& arch, const ModelVars& vars) {
  const Shape& s = x.shape();
  const int stride = arch.total_stride();
  if (s.c != 1) fail(ErrorKind::kDimension, "encoder expects single-channel input, got " + s.str());
  if (s.h % stride != 0 || s.w % stride != 0) {
    fail(ErrorKind::kDimension, "input " + s.str() + " is not divisible by total stride " +
                                    std::to_string(stride));
  }
  Var y = scale(x, 1.0 / kPixelScale);
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const LayerSpec& spec = arch.layers[l];
    y = conv2d(y, vars.encoder[l].first, vars.encoder[l].second, {spec.stride, spec.pad, 0});
    if (arch.has_gdn(l)) y = gdn(y, vars.encoder_gdn[l].first, vars.encoder_gdn[l].second);
  }
  return y;
}

Var decode_transform(Var y_hat, const ArchConfig& arch, const ModelVars& vars) {
  if (y_hat.shape().c != arch.m) {
    fail(ErrorKind::kDimension, "decoder expects " + std::to_string(arch.m) + " maps, got " +
                                    y_hat.shape().str());
  }
  Var x = y_hat;
  for (std::size_t l = arch.layers.size(); l-- > 0;) {
    const LayerSpec& spec = arch.layers[l];
    if (arch.has_gdn(l)) x = igdn(x, vars.decoder_igdn[l].first, vars.decoder_igdn[l].second);
    x = tconv2d(x, vars.decoder[l].first, vars.decoder[l].second,
                {spec.stride, spec.pad, arch.output_pad(l)});
  }
  return scale(x, kPixelScale);
}

Tensor encode_transform(const Tensor& x, const Model& model) {
  Graph graph;
  const ModelVars vars = bind(graph, model.arch, model.params, kNoGroup);
  return encode_transform(graph.constant(x), model.arch, vars).value();
}

Tensor decode_transform(const Tensor& y_hat, const Model& model) {
  Graph graph;
  const ModelVars vars = bind(graph, model.arch, model.params, kNoGroup);
  return decode_transform(graph.constant(y_hat), model.arch, vars).value();
}

namespace {

constexpr char kModelMagic[] = "LTAE";
constexpr std::uint8_t kModelVersion = 1;

std::vector<std::uint8_t> serialize_body(const Model& model) {
  const ArchConfig& arch = model.arch;
  ByteWriter w;
  w.raw(std::string_view(kModelMagic, 4));
  w.u8(kModelVersion);
  w.u16(static_cast<std::uint16_t>(arch.m));
  w.u8(static_cast<std::uint8_t>(arch.layers.size()));
  for (const LayerSpec& l : arch.layers) {
    w.u16(static_cast<std::uint16_t>(l.out_channels));
    w.u8(static_cast<std::uint8_t>(l.kernel));
    w.u8(static_cast<std::uint8_t>(l.stride));
    w.u8(static_cast<std::uint8_t>(l.pad));
    // Set only on the last layer, the one followed by the end GDN.
    w.u8(arch.end_normalization && &l == &arch.layers.back() ? 1 : 0);
  }
  for (const auto& [name, tensor] : named_parameters(model.params)) {
    w.u8(static_cast<std::uint8_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(tensor->size()));
    for (Eigen::Index i = 0; i < tensor->size(); ++i) w.f64((*tensor)[i]);
  }
  return std::move(w.bytes());
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  model.arch.validate();
  std::vector<std::uint8_t> bytes = serialize_body(model);
  ByteWriter trailer;
  trailer.u32(crc32(bytes));
  bytes.insert(bytes.end(), trailer.bytes().begin(), trailer.bytes().end());
  return bytes;
}

Model parse_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    fail(ErrorKind::kFormat, "bad magic: not a model file");
  }
  ByteReader r(bytes);
  r.raw(4);
  const std::uint8_t version = r.u8();
  if (version != kModelVersion) {
    fail(ErrorKind::kFormat, "model version mismatch: " + std::to_string(version));
  }
  if (bytes.size() < 4 + 4) fail(ErrorKind::kFormat, "truncated model file");
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 4);
  ByteReader trailer(std::span<const std::uint8_t>(bytes).subspan(bytes.size() - 4));
  if (crc32(body) != trailer.u32()) fail(ErrorKind::kChecksum, "model checksum mismatch");

  ByteReader br(body);
  br.raw(5);
  Model model;
  model.arch.m = br.u16();
  const std::uint8_t layers = br.u8();
  for (std::uint8_t i = 0; i < layers; ++i) {
    LayerSpec l;
    l.out_channels = br.u16();
    l.kernel = br.u8();
    l.stride = br.u8();
    l.pad = br.u8();
    const std::uint8_t end_norm = br.u8();
    if (end_norm > 1 || (end_norm == 1 && i + 1 != layers)) {
      fail(ErrorKind::kFormat, "end normalization flag set on layer " + std::to_string(i));
    }
    model.arch.end_normalization = end_norm == 1;
    model.arch.layers.push_back(l);
  }
  model.arch.validate();

  // Shapes come from the architecture; sections only carry values.
  model.params = init_params(model.arch, 0);
  std::map<std::string, Tensor*> slots;
  for (auto& [name, tensor] : named_parameters(model.params)) slots[name] = tensor;
  while (br.remaining() > 0) {
    const std::uint8_t len = br.u8();
    const auto name_bytes = br.raw(len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint32_t count = br.u32();
    auto it = slots.find(name);
    if (it == slots.end()) fail(ErrorKind::kFormat, "unexpected model section '" + name + "'");
    Tensor* t = it->second;
    if (Eigen::Index(count) != t->size()) {
      fail(ErrorKind::kFormat, "section '" + name + "' has " + std::to_string(count) +
                                   " values, architecture needs " + std::to_string(t->size()));
    }
    for (Eigen::Index i = 0; i < t->size(); ++i) (*t)[i] = br.f64();
    slots.erase(it);
  }
  if (!slots.empty()) fail(ErrorKind::kFormat, "missing model section '" + slots.begin()->first + "'");
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

std::uint32_t model_checksum(const Model& model) { return crc32(serialize_body(model)); }

}  // namespace ltc
