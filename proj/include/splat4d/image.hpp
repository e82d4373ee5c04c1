#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splat4d {

// Interleaved row-major image, values in [0,1] for color planes, meters for
// depth. Index: (y * width + x) * channels + c.
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;

  static Image zeros(int w, int h, int c) {
    Image im;
    im.width = w;
    im.height = h;
    im.channels = c;
    im.data.assign(static_cast<size_t>(w) * h * c, 0.0);
    return im;
  }
  double& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// separable Gaussian blur, kernel radius ceil(3*sigma), replicated border;
// sigma <= 0 returns the input unchanged
Image gaussian_blur(const Image& im, double sigma);

// Binary PPM (P6), 8-bit, values clamped+rounded from [0,1].
void save_ppm(const std::string& path, const Image& rgb);
Image load_ppm(const std::string& path);

// Raw depth: magic "DPTH", u32 width, u32 height, u32 reserved, then
// width*height little-endian f32 row-major meters.
void save_depth(const std::string& path, const Image& depth);
Image load_depth(const std::string& path);

// Whole-file write via temp file + rename so readers never see partial data.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace splat4d
