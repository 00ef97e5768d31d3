#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <string>

#include "tabdpo/errors.hpp"
#include "tabdpo/image_render.hpp"

namespace tabdpo {

namespace {

constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) |
         (std::uint32_t{in[at + 2]} << 8) | std::uint32_t{in[at + 3]};
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               std::span<const std::uint8_t> data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  if (raster.width <= 0 || raster.height <= 0 ||
      raster.rgb.size() != static_cast<std::size_t>(raster.width) * raster.height * 3) {
    throw PngError("raster dimensions do not match pixel data");
  }
  const std::size_t stride = static_cast<std::size_t>(raster.width) * 3;
  std::vector<std::uint8_t> filtered;
  filtered.reserve((stride + 1) * raster.height);
  for (int y = 0; y < raster.height; ++y) {
    filtered.push_back(0);
    const auto* row = raster.rgb.data() + y * stride;
    filtered.insert(filtered.end(), row, row + stride);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(filtered.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, filtered.data(), static_cast<uLong>(filtered.size()),
                9) != Z_OK) {
    throw PngError("deflate failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(raster.width));
  put_u32(ihdr, static_cast<std::uint32_t>(raster.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, RGB, deflate, filter 0, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

Raster decode_png(std::span<const std::uint8_t> png) {
  if (png.size() < kSignature.size() ||
      !std::equal(kSignature.begin(), kSignature.end(), png.begin())) {
    throw PngError("missing PNG signature");
  }
  Raster raster;
  std::vector<std::uint8_t> packed;
  bool seen_header = false, seen_end = false;
  std::size_t at = kSignature.size();
  while (at + 12 <= png.size() && !seen_end) {
    const std::uint32_t length = get_u32(png, at);
    if (at + 12 + length > png.size()) throw PngError("truncated chunk");
    const auto type = png.subspan(at + 4, 4);
    const auto data = png.subspan(at + 8, length);
    const uLong crc = crc32(0L, type.data(), static_cast<uInt>(4 + length));
    if (crc != get_u32(png, at + 8 + length)) throw PngError("chunk CRC mismatch");
    const std::string name(type.begin(), type.end());
    if (name == "IHDR") {
      if (length != 13) throw PngError("bad IHDR length");
      raster.width = static_cast<int>(get_u32(data, 0));
      raster.height = static_cast<int>(get_u32(data, 4));
      if (data[8] != 8 || data[9] != 2 || data[10] != 0 || data[11] != 0 || data[12] != 0) {
        throw PngError("only 8-bit RGB non-interlaced images are supported");
      }
      seen_header = true;
    } else if (name == "IDAT") {
      packed.insert(packed.end(), data.begin(), data.end());
    } else if (name == "IEND") {
      seen_end = true;
    }
    at += 12 + length;
  }
  if (!seen_header || !seen_end) throw PngError("missing IHDR or IEND");
  if (raster.width <= 0 || raster.height <= 0) throw PngError("empty image");

  const std::size_t stride = static_cast<std::size_t>(raster.width) * 3;
  std::vector<std::uint8_t> filtered((stride + 1) * raster.height);
  uLongf filtered_size = static_cast<uLongf>(filtered.size());
  if (uncompress(filtered.data(), &filtered_size, packed.data(),
                 static_cast<uLong>(packed.size())) != Z_OK ||
      filtered_size != filtered.size()) {
    throw PngError("inflate failed");
  }

  raster.rgb.assign(stride * raster.height, 0);
  for (int y = 0; y < raster.height; ++y) {
    const std::uint8_t filter = filtered[y * (stride + 1)];
    const std::uint8_t* src = filtered.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = raster.rgb.data() + y * stride;
    const std::uint8_t* prev = y > 0 ? dst - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= 3 ? dst[i - 3] : 0;
      const int up = prev ? prev[i] : 0;
      const int up_left = (prev && i >= 3) ? prev[i - 3] : 0;
      int predicted = 0;
      switch (filter) {
        case 0:
          break;
        case 1:
          predicted = left;
          break;
        case 2:
          predicted = up;
          break;
        case 3:
          predicted = (left + up) / 2;
          break;
        case 4:
          predicted = paeth(left, up, up_left);
          break;
        default:
          throw PngError("unknown row filter " + std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(src[i] + predicted);
    }
  }
  return raster;
}

}  // namespace tabdpo
