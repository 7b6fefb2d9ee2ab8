#include "ltc/bitstream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

#include "ltc/byte_io.hpp"

namespace ltc {

std::vector<Bin> binarize(std::int32_t k) {
  if (k > kMaxSymbol || k < -kMaxSymbol) {
    fail(ErrorKind::kStream, "symbol " + std::to_string(k) + " outside the codable range");
  }
  std::vector<Bin> bins;
  if (k == 0) {
    bins.push_back({1, BinKind::kZeroFlag, 0});
    return bins;
  }
  bins.push_back({0, BinKind::kZeroFlag, 0});
  bins.push_back({k < 0 ? 1 : 0, BinKind::kSign, 0});
  const std::uint32_t value = static_cast<std::uint32_t>(std::abs(k));  // |k| - 1 + 1
  const int length = std::bit_width(value) - 1;
  for (int i = 0; i < length; ++i) bins.push_back({0, BinKind::kPrefix, std::min(i, kMaxPrefixContext)});
  bins.push_back({1, BinKind::kPrefix, std::min(length, kMaxPrefixContext)});
  for (int i = length - 1; i >= 0; --i) bins.push_back({int((value >> i) & 1u), BinKind::kSuffix, 0});
  return bins;
}

void ArithmeticEncoder::encode_with(int bit, std::uint32_t p0) {
  const std::uint32_t bound = (range_ >> kProbabilityBits) * p0;
  if (bit == 0) {
    range_ = bound;
  } else {
    low_ += bound;
    range_ -= bound;
  }
  if (low_ > 0xFFFFFFFFu) {
    std::size_t i = out_.size();
    while (out_[--i] == 0xFF) out_[i] = 0;
    ++out_[i];
    low_ &= 0xFFFFFFFFu;
  }
  while (range_ < (1u << 24)) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFu;
    range_ <<= 8;
  }
}

void ArithmeticEncoder::encode(int bit, BinProbability& context) {
  encode_with(bit, context.p);
  context.update(bit);
}

void ArithmeticEncoder::encode_bypass(int bit) { encode_with(bit, kProbabilityOne / 2); }

std::vector<std::uint8_t> ArithmeticEncoder::finish() {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> shift));
  }
  std::vector<std::uint8_t> out = std::move(out_);
  out_.clear();
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  return out;
}

ArithmeticDecoder::ArithmeticDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t ArithmeticDecoder::next_byte() {
  if (pos_ >= bytes_.size()) fail(ErrorKind::kStream, "truncated arithmetic-coded payload");
  return bytes_[pos_++];
}

int ArithmeticDecoder::decode_with(std::uint32_t p0) {
  const std::uint32_t bound = (range_ >> kProbabilityBits) * p0;
  int bit;
  if (code_ < bound) {
    range_ = bound;
    bit = 0;
  } else {
    code_ -= bound;
    range_ -= bound;
    bit = 1;
  }
  while (range_ < (1u << 24)) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return bit;
}

int ArithmeticDecoder::decode(BinProbability& context) {
  const int bit = decode_with(context.p);
  context.update(bit);
  return bit;
}

int ArithmeticDecoder::decode_bypass() { return decode_with(kProbabilityOne / 2); }

void encode_symbol(ArithmeticEncoder& encoder, MapContexts& contexts, std::int32_t k) {
  for (const Bin& bin : binarize(k)) {
    switch (bin.kind) {
      case BinKind::kZeroFlag: encoder.encode(bin.bit, contexts.zero); break;
      case BinKind::kPrefix: encoder.encode(bin.bit, contexts.prefix[bin.depth]); break;
      case BinKind::kSign:
      case BinKind::kSuffix: encoder.encode_bypass(bin.bit); break;
    }
  }
}

std::int32_t decode_symbol(ArithmeticDecoder& decoder, MapContexts& contexts) {
  if (decoder.decode(contexts.zero) == 1) return 0;
  const bool negative = decoder.decode_bypass() == 1;
  int length = 0;
  while (decoder.decode(contexts.prefix[std::min(length, kMaxPrefixContext)]) == 0) {
    if (++length > 15) fail(ErrorKind::kStream, "corrupt payload: Exp-Golomb prefix too long");
  }
  std::uint32_t value = 1;
  for (int i = 0; i < length; ++i) value = (value << 1) | std::uint32_t(decoder.decode_bypass());
  if (value > std::uint32_t(kMaxSymbol)) fail(ErrorKind::kStream, "corrupt payload: symbol out of range");
  return negative ? -std::int32_t(value) : std::int32_t(value);
}

std::vector<std::uint8_t> encode_symbols(const SymbolTensor& symbols) {
  const Shape& s = symbols.shape();
  ArithmeticEncoder encoder;
  for (Eigen::Index c = 0; c < s.c; ++c) {
    MapContexts contexts;
    for (Eigen::Index n = 0; n < s.n; ++n) {
      const auto plane = symbols.plane(n, c);
      for (Eigen::Index i = 0; i < plane.size(); ++i) encode_symbol(encoder, contexts, plane.data()[i]);
    }
  }
  return encoder.finish();
}

SymbolTensor decode_symbols(std::span<const std::uint8_t> payload, const Shape& shape) {
  SymbolTensor symbols(shape);
  ArithmeticDecoder decoder(payload);
  for (Eigen::Index c = 0; c < shape.c; ++c) {
    MapContexts contexts;
    for (Eigen::Index n = 0; n < shape.n; ++n) {
      auto plane = symbols.plane(n, c);
      for (Eigen::Index i = 0; i < plane.size(); ++i) plane.data()[i] = decode_symbol(decoder, contexts);
    }
  }
  if (decoder.consumed() != payload.size()) {
    fail(ErrorKind::kStream, "payload has " + std::to_string(payload.size() - decoder.consumed()) +
                                 " trailing bytes");
  }
  return symbols;
}

namespace {
constexpr char kStreamMagic[] = "LTQ1";
}  // namespace

std::vector<std::uint8_t> serialize_header(const BitstreamHeader& h) {
  ByteWriter w;
  w.raw(std::string_view(kStreamMagic, 4));
  w.u16(h.height);
  w.u16(h.width);
  w.u8(h.pad_right);
  w.u8(h.pad_bottom);
  w.f32(h.beta);
  w.u32(h.model_checksum);
  w.u32(h.payload_length);
  return std::move(w.bytes());
}

BitstreamHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kStreamMagic, 4) != 0) {
    fail(ErrorKind::kFormat, "bad magic: not an LTQ1 bitstream");
  }
  if (bytes.size() < BitstreamHeader::kSize) fail(ErrorKind::kFormat, "truncated bitstream header");
  ByteReader r(bytes);
  r.raw(4);
  BitstreamHeader h;
  h.height = r.u16();
  h.width = r.u16();
  h.pad_right = r.u8();
  h.pad_bottom = r.u8();
  h.beta = r.f32();
  h.model_checksum = r.u32();
  h.payload_length = r.u32();
  if (h.height == 0 || h.width == 0) fail(ErrorKind::kFormat, "bitstream has zero image extent");
  if (!(h.beta > 0.0f) || !std::isfinite(h.beta)) fail(ErrorKind::kFormat, "bitstream beta is not positive");
  return h;
}

EncodedImage encode_image_detailed(const Image& image, const Model& model, double beta) {
  if (image.rows() < 1 || image.cols() < 1 || image.rows() > 0xFFFF || image.cols() > 0xFFFF) {
    fail(ErrorKind::kUsage, "image extent must be within [1, 65535]");
  }
  const int stride = model.arch.total_stride();
  EncodedImage out;
  BitstreamHeader& h = out.header;
  h.height = static_cast<std::uint16_t>(image.rows());
  h.width = static_cast<std::uint16_t>(image.cols());
  h.pad_right = static_cast<std::uint8_t>((stride - image.cols() % stride) % stride);
  h.pad_bottom = static_cast<std::uint8_t>((stride - image.rows() % stride) % stride);
  h.beta = static_cast<float>(beta);
  h.model_checksum = model_checksum(model);

  const Image padded = reflect_pad(image, h.pad_right, h.pad_bottom);
  const Tensor latent = encode_transform(to_tensor(padded), model);
  out.symbols = quantize(latent, QuantSpec::from_model(model.params, double(h.beta)));
  const std::vector<std::uint8_t> payload = encode_symbols(out.symbols);
  h.payload_length = static_cast<std::uint32_t>(payload.size());
  out.bytes = serialize_header(h);
  out.bytes.insert(out.bytes.end(), payload.begin(), payload.end());
  return out;
}

std::vector<std::uint8_t> encode_image(const Image& image, const Model& model, double beta) {
  return encode_image_detailed(image, model, beta).bytes;
}

DecodedImage decode_image_detailed(std::span<const std::uint8_t> bytes, const Model& model) {
  DecodedImage out;
  out.header = parse_header(bytes);
  const BitstreamHeader& h = out.header;
  if (h.model_checksum != model_checksum(model)) {
    fail(ErrorKind::kChecksum, "bitstream was encoded with a different model");
  }
  if (bytes.size() - BitstreamHeader::kSize != h.payload_length) {
    fail(ErrorKind::kStream, "payload length mismatch: header says " +
                                 std::to_string(h.payload_length) + ", stream has " +
                                 std::to_string(bytes.size() - BitstreamHeader::kSize));
  }
  const int stride = model.arch.total_stride();
  const Eigen::Index rows = Eigen::Index(h.height) + h.pad_bottom;
  const Eigen::Index cols = Eigen::Index(h.width) + h.pad_right;
  if (rows % stride != 0 || cols % stride != 0) {
    fail(ErrorKind::kFormat, "padded extent is not a multiple of the model stride");
  }
  const Shape latent_shape{1, model.arch.m, rows / stride, cols / stride};
  out.symbols = decode_symbols(bytes.subspan(BitstreamHeader::kSize), latent_shape);
  const Tensor y_hat = dequantize(out.symbols, QuantSpec::from_model(model.params, double(h.beta)));
  const Tensor full = decode_transform(y_hat, model);
  out.reconstruction = Tensor(Shape{1, 1, h.height, h.width});
  out.reconstruction.plane(0, 0) = full.plane(0, 0).topLeftCorner(h.height, h.width);
  out.image = to_image(out.reconstruction);
  return out;
}

Image decode_image(std::span<const std::uint8_t> bytes, const Model& model) {
  return decode_image_detailed(bytes, model).image;
}

}  // namespace ltc
