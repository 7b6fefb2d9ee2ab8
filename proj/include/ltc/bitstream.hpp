#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ltc/image.hpp"
#include "ltc/model.hpp"
#include "ltc/quantization.hpp"
#include "ltc/tensor.hpp"

namespace ltc {

inline constexpr int kProbabilityBits = 12;
inline constexpr std::uint32_t kProbabilityOne = 1u << kProbabilityBits;
inline constexpr int kAdaptationShift = 5;
inline constexpr int kMaxPrefixContext = 4;

// Adaptive estimate of P(bit = 0) = p / 4096, p in [1, 4095].
struct BinProbability {
  std::uint16_t p = kProbabilityOne / 2;

  void update(int bit) {
    if (bit == 0) {
      p = static_cast<std::uint16_t>(p + ((kProbabilityOne - p) >> kAdaptationShift));
    } else {
      p = static_cast<std::uint16_t>(p - (p >> kAdaptationShift));
    }
  }
};

enum class BinKind : std::uint8_t { kZeroFlag, kSign, kPrefix, kSuffix };

struct Bin {
  int bit;
  BinKind kind;
  int depth;  // prefix position, capped at kMaxPrefixContext; 0 otherwise

  friend bool operator==(const Bin&, const Bin&) = default;
};

// Zero flag, bypass sign, then |k| - 1 as order-0 Exp-Golomb with adaptive
// prefix bins and bypass suffix bins.
std::vector<Bin> binarize(std::int32_t k);

// 32-bit low/range binary arithmetic coder. Carries propagate into bytes
// already written; finish() flushes the four bytes of low.
class ArithmeticEncoder {
 public:
  void encode(int bit, BinProbability& context);
  void encode_bypass(int bit);
  std::vector<std::uint8_t> finish();

 private:
  void encode_with(int bit, std::uint32_t p0);

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::vector<std::uint8_t> out_;
};

class ArithmeticDecoder {
 public:
  explicit ArithmeticDecoder(std::span<const std::uint8_t> bytes);

  int decode(BinProbability& context);
  int decode_bypass();
  std::size_t consumed() const { return pos_; }

 private:
  int decode_with(std::uint32_t p0);
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

// Adaptive contexts of one feature map.
struct MapContexts {
  BinProbability zero;
  std::array<BinProbability, kMaxPrefixContext + 1> prefix;
};

void encode_symbol(ArithmeticEncoder& encoder, MapContexts& contexts, std::int32_t k);
std::int32_t decode_symbol(ArithmeticDecoder& decoder, MapContexts& contexts);

// Codes a symbol tensor map by map, each map in (batch, row, column) order.
std::vector<std::uint8_t> encode_symbols(const SymbolTensor& symbols);
SymbolTensor decode_symbols(std::span<const std::uint8_t> payload, const Shape& shape);

struct BitstreamHeader {
  std::uint16_t height = 0;  // before padding
  std::uint16_t width = 0;
  std::uint8_t pad_right = 0;
  std::uint8_t pad_bottom = 0;
  float beta = 1.0f;
  std::uint32_t model_checksum = 0;
  std::uint32_t payload_length = 0;

  static constexpr std::size_t kSize = 22;

  friend bool operator==(const BitstreamHeader&, const BitstreamHeader&) = default;
};

std::vector<std::uint8_t> serialize_header(const BitstreamHeader& header);
BitstreamHeader parse_header(std::span<const std::uint8_t> bytes);

struct EncodedImage {
  BitstreamHeader header;
  SymbolTensor symbols;
  std::vector<std::uint8_t> bytes;  // header + payload
};

// pad -> analysis transform -> quantize(beta delta, mu_bar) -> code. beta is
// stored as float32 and the quantizer uses that stored value.
EncodedImage encode_image_detailed(const Image& image, const Model& model, double beta);
std::vector<std::uint8_t> encode_image(const Image& image, const Model& model, double beta);

struct DecodedImage {
  BitstreamHeader header;
  SymbolTensor symbols;
  Tensor reconstruction;  // cropped, before clamping
  Image image;
};

DecodedImage decode_image_detailed(std::span<const std::uint8_t> bytes, const Model& model);
Image decode_image(std::span<const std::uint8_t> bytes, const Model& model);

}  // namespace ltc
