#include "splat4d/image.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace splat4d {

Image gaussian_blur(const Image& im, double sigma) {
  if (sigma <= 0) return im;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;

  Image tmp = Image::zeros(im.width, im.height, im.channels);
  Image out = Image::zeros(im.width, im.height, im.channels);
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * im.at(clampi(x + i, 0, im.width - 1), y, c);
        tmp.at(x, y, c) = acc;
      }
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(x, clampi(y + i, 0, im.height - 1), c);
        out.at(x, y, c) = acc;
      }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void save_ppm(const std::string& path, const Image& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("save_ppm wants 3 channels");
  std::string bytes;
  char header[64];
  int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", rgb.width, rgb.height);
  bytes.append(header, static_cast<size_t>(n));
  bytes.reserve(bytes.size() + rgb.size());
  for (double v : rgb.data) {
    double q = std::round(std::fmin(std::fmax(v, 0.0), 1.0) * 255.0);
    bytes.push_back(static_cast<char>(static_cast<uint8_t>(q)));
  }
  write_file_atomic(path, bytes);
}

Image load_ppm(const std::string& path) {
  std::string bytes = read_file(path);
  std::istringstream ss(bytes);
  std::string magic;
  int w, h, maxval;
  ss >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) throw std::runtime_error("bad ppm: " + path);
  ss.get();  // single whitespace after maxval
  size_t offset = static_cast<size_t>(ss.tellg());
  size_t need = static_cast<size_t>(w) * h * 3;
  if (bytes.size() < offset + need) throw std::runtime_error("truncated ppm: " + path);
  Image im = Image::zeros(w, h, 3);
  for (size_t i = 0; i < need; ++i)
    im.data[i] = static_cast<uint8_t>(bytes[offset + i]) / 255.0;
  return im;
}

namespace {
void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
uint32_t get_u32(const std::string& s, size_t off) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<uint8_t>(s[off + i])) << (8 * i);
  return v;
}
}  // namespace

void save_depth(const std::string& path, const Image& depth) {
  if (depth.channels != 1) throw std::invalid_argument("save_depth wants 1 channel");
  std::string bytes = "DPTH";
  put_u32(bytes, static_cast<uint32_t>(depth.width));
  put_u32(bytes, static_cast<uint32_t>(depth.height));
  put_u32(bytes, 0);
  for (double v : depth.data) {
    float f = static_cast<float>(v);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(bytes, u);
  }
  write_file_atomic(path, bytes);
}

Image load_depth(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "DPTH") != 0)
    throw std::runtime_error("bad depth file: " + path);
  uint32_t w = get_u32(bytes, 4), h = get_u32(bytes, 8);
  size_t need = 16 + static_cast<size_t>(w) * h * 4;
  if (bytes.size() < need) throw std::runtime_error("truncated depth file: " + path);
  Image im = Image::zeros(static_cast<int>(w), static_cast<int>(h), 1);
  for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
    uint32_t u = get_u32(bytes, 16 + 4 * i);
    float f;
    std::memcpy(&f, &u, 4);
    im.data[i] = f;
  }
  return im;
}

}  // namespace splat4d
