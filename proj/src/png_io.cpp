#include "textar/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace textar::png {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void write_chunk(std::vector<unsigned char>& out, const char type[4],
                 const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc =
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_gray8(const std::string& path, const Image& im) {
  if (im.h <= 0 || im.w <= 0) throw std::invalid_argument("png: empty image");

  // filter byte 0 per scanline, paper-style inversion
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(im.h) * (im.w + 1));
  for (int y = 0; y < im.h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < im.w; ++x) {
      const double p = std::min(1.0, std::max(0.0, im.at(y, x)));
      raw.push_back(static_cast<unsigned char>(255 - std::lround(p * 255.0)));
    }
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  comp.resize(comp_len);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(im.w));
  put_u32(ihdr, static_cast<std::uint32_t>(im.h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", comp);
  write_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("png: cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("png: write failed: " + path);
}

Image read_gray8(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("png: cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw std::runtime_error("png: bad signature: " + path);

  int w = 0, h = 0;
  std::vector<unsigned char> idat;
  std::size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = get_u32(&buf[pos]);
    const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
    const unsigned char* data = &buf[pos + 8];
    if (pos + 12 + len > buf.size()) throw std::runtime_error("png: truncated chunk");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      w = static_cast<int>(get_u32(data));
      h = static_cast<int>(get_u32(data + 4));
      if (data[8] != 8 || data[9] != 0 || data[12] != 0)
        throw std::runtime_error("png: only 8-bit grayscale non-interlaced supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0) throw std::runtime_error("png: missing IHDR");

  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<unsigned char> raw(stride * h);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw std::runtime_error("png: inflate failed");

  // defilter (grayscale: one byte per pixel)
  std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const unsigned char filter = raw[y * stride];
    for (int x = 0; x < w; ++x) {
      const int cur = raw[y * stride + 1 + x];
      const int a = x > 0 ? px[y * static_cast<std::size_t>(w) + x - 1] : 0;
      const int b = y > 0 ? px[(y - 1) * static_cast<std::size_t>(w) + x] : 0;
      const int c = (x > 0 && y > 0) ? px[(y - 1) * static_cast<std::size_t>(w) + x - 1] : 0;
      int val = 0;
      switch (filter) {
        case 0: val = cur; break;
        case 1: val = cur + a; break;
        case 2: val = cur + b; break;
        case 3: val = cur + (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          val = cur + (pa <= pb && pa <= pc ? a : (pb <= pc ? b : c));
          break;
        }
        default: throw std::runtime_error("png: unknown filter");
      }
      px[y * static_cast<std::size_t>(w) + x] = static_cast<unsigned char>(val & 0xff);
    }
  }

  Image im(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      im.at(y, x) = (255 - px[y * static_cast<std::size_t>(w) + x]) / 255.0;
  return im;
}

}  // namespace textar::png
