#include "sinkdem/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sinkdem/rng.hpp"

namespace sinkdem::data {

namespace {

std::uint32_t read_be_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("idx: truncated header in " + path);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>(v & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_le_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_le_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("sdem: truncated header in " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

IdxContent read_idx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("idx: cannot open " + path);
  unsigned char m[4];
  if (!f.read(reinterpret_cast<char*>(m), 4))
    throw FormatError("idx: file shorter than the magic in " + path);
  const std::uint32_t magic = (static_cast<std::uint32_t>(m[0]) << 24) |
                              (static_cast<std::uint32_t>(m[1]) << 16) |
                              (static_cast<std::uint32_t>(m[2]) << 8) | m[3];
  IdxContent out;
  if (magic == 0x00000803u) {
    out.is_images = true;
    out.count = static_cast<int>(read_be_u32(f, path));
    out.rows = static_cast<int>(read_be_u32(f, path));
    out.cols = static_cast<int>(read_be_u32(f, path));
    const std::size_t n =
        static_cast<std::size_t>(out.count) * out.rows * out.cols;
    std::vector<unsigned char> raw(n);
    if (!f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n)))
      throw FormatError("idx: image payload shorter than header promises in " + path);
    out.images.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      out.images[i] = static_cast<float>(raw[i]) / 255.0f;
  } else if (magic == 0x00000801u) {
    out.is_images = false;
    out.count = static_cast<int>(read_be_u32(f, path));
    out.labels.resize(static_cast<std::size_t>(out.count));
    if (!f.read(reinterpret_cast<char*>(out.labels.data()), out.count))
      throw FormatError("idx: label payload shorter than header promises in " + path);
  } else {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%02x %02x %02x %02x", m[0], m[1], m[2], m[3]);
    throw FormatError("idx: unexpected magic [" + std::string(hex) + "] in " + path);
  }
  return out;
}

MnistSet load_mnist(const std::string& images_path, const std::string& labels_path) {
  const IdxContent imgs = read_idx(images_path);
  if (!imgs.is_images) throw FormatError("mnist: " + images_path + " is not an image file");
  const IdxContent labs = read_idx(labels_path);
  if (labs.is_images) throw FormatError("mnist: " + labels_path + " is not a label file");
  if (imgs.count != labs.count)
    throw FormatError("mnist: image/label count mismatch between files");
  MnistSet set;
  set.count = imgs.count;
  set.rows = imgs.rows;
  set.cols = imgs.cols;
  set.images = imgs.images;
  set.labels = labs.labels;
  return set;
}

void write_idx_images(const std::string& path, const std::vector<float>& images,
                      int count, int rows, int cols) {
  if (images.size() != static_cast<std::size_t>(count) * rows * cols)
    throw ShapeError("idx: image buffer does not match count*rows*cols");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("idx: cannot open for write: " + path);
  write_be_u32(f, 0x00000803u);
  write_be_u32(f, static_cast<std::uint32_t>(count));
  write_be_u32(f, static_cast<std::uint32_t>(rows));
  write_be_u32(f, static_cast<std::uint32_t>(cols));
  std::vector<unsigned char> raw(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const float v = std::min(1.0f, std::max(0.0f, images[i]));
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!f) throw IoError("idx: write failed: " + path);
}

void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("idx: cannot open for write: " + path);
  write_be_u32(f, 0x00000801u);
  write_be_u32(f, static_cast<std::uint32_t>(labels.size()));
  f.write(reinterpret_cast<const char*>(labels.data()),
          static_cast<std::streamsize>(labels.size()));
  if (!f) throw IoError("idx: write failed: " + path);
}

// ---- synthetic digit fixture ----

namespace {

// 5x7 bitmap font for digits 0..9
const char* kGlyphs[10] = {
    "01110 10001 10011 10101 11001 10001 01110",
    "00100 01100 00100 00100 00100 00100 01110",
    "01110 10001 00001 00110 01000 10000 11111",
    "11110 00001 00001 01110 00001 00001 11110",
    "00010 00110 01010 10010 11111 00010 00010",
    "11111 10000 11110 00001 00001 10001 01110",
    "00110 01000 10000 11110 10001 10001 01110",
    "11111 00001 00010 00100 01000 01000 01000",
    "01110 10001 10001 01110 10001 10001 01110",
    "01110 10001 10001 01111 00001 00010 01100"};

void render_digit(float* img, int digit, Rng& rng) {
  const int rows = 28, cols = 28;
  // smooth per-image background ramp under the glyph; the denoiser has to
  // recover it alongside the strokes
  const double b0 = 0.05 + rng.uniform() * 0.25;
  const double gx = rng.uniform(-0.008, 0.008);
  const double gy = rng.uniform(-0.008, 0.008);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x)
      img[y * cols + x] = static_cast<float>(b0 + gx * (x - 14) + gy * (y - 14));
  const double scale = 2.0 + rng.uniform() * 1.8;   // glyph cell size in pixels
  const double dx = rng.uniform(-3.5, 3.5);
  const double dy = rng.uniform(-3.5, 3.5);
  const double angle = rng.uniform(-0.35, 0.35);
  const double bright = 0.40 + rng.uniform() * 0.55;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const char* glyph = kGlyphs[digit];

  // sparse dot texture: fine detail the noise partially obscures, which keeps
  // the reachable reconstruction error near the protocol's target
  const int dots = 15 + static_cast<int>(rng.below(31));
  for (int k = 0; k < dots; ++k) {
    const double px = rng.uniform(1.0, cols - 2.0);
    const double py = rng.uniform(1.0, rows - 2.0);
    const double amp = rng.uniform(0.35, 0.7) * (rng.below(2) ? 1.0 : -1.0);
    const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
    const double fx = px - x0, fy = py - y0;
    auto dot = [&](int yy, int xx, double ww) {
      if (yy >= 0 && yy < rows && xx >= 0 && xx < cols)
        img[yy * cols + xx] = static_cast<float>(
            std::min(1.0, std::max(0.0, img[yy * cols + xx] + ww)));
    };
    dot(y0, x0, amp * (1 - fx) * (1 - fy));
    dot(y0, x0 + 1, amp * fx * (1 - fy));
    dot(y0 + 1, x0, amp * (1 - fx) * fy);
    dot(y0 + 1, x0 + 1, amp * fx * fy);
  }

  // bilinear splat of the 5x7 bitmap into the canvas
  for (int gy = 0; gy < 7; ++gy)
    for (int gx = 0; gx < 5; ++gx) {
      if (glyph[gy * 6 + gx] != '1') continue;
      for (int sy = 0; sy < 3; ++sy)
        for (int sx = 0; sx < 3; ++sx) {
          const double u = (gx - 2.0 + (sx + 0.5) / 3.0) * scale;
          const double v = (gy - 3.0 + (sy + 0.5) / 3.0) * scale;
          const double px = 13.5 + ca * u - sa * v + dx;
          const double py = 13.5 + sa * u + ca * v + dy;
          const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
          const double fx = px - x0, fy = py - y0;
          // 9 subsamples cover scale^2 pixels; normalize so strokes land near `bright`
          const double w = bright * scale * scale / 9.0;
          auto splat = [&](int yy, int xx, double ww) {
            if (yy >= 0 && yy < rows && xx >= 0 && xx < cols)
              img[yy * cols + xx] =
                  std::min(1.0f, img[yy * cols + xx] + static_cast<float>(ww));
          };
          splat(y0, x0, w * (1 - fx) * (1 - fy));
          splat(y0, x0 + 1, w * fx * (1 - fy));
          splat(y0 + 1, x0, w * (1 - fx) * fy);
          splat(y0 + 1, x0 + 1, w * fx * fy);
        }
    }

  // fixed per-pixel texture, part of the clean target; under the protocol's
  // observation noise only a posterior fraction of it is recoverable, which
  // pins the reachable reconstruction error near the convergence target
  for (int i = 0; i < rows * cols; ++i)
    img[i] = static_cast<float>(
        std::min(1.0, std::max(0.0, img[i] + rng.uniform(-0.28, 0.28))));
}

}  // namespace

void write_digit_fixture(const std::string& dir, int train_count, int test_count,
                         std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto make = [&](int count, std::uint64_t salt, const std::string& img_name,
                  const std::string& lab_name) {
    Rng rng(seed ^ salt);
    std::vector<float> images(static_cast<std::size_t>(count) * 28 * 28);
    std::vector<unsigned char> labels(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const int digit = static_cast<int>(rng.below(10));
      labels[static_cast<std::size_t>(i)] = static_cast<unsigned char>(digit);
      render_digit(images.data() + static_cast<std::size_t>(i) * 28 * 28, digit, rng);
    }
    write_idx_images((fs::path(dir) / img_name).string(), images, count, 28, 28);
    write_idx_labels((fs::path(dir) / lab_name).string(), labels);
  };
  make(train_count, 0x7261696eULL, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  make(test_count, 0x74657374ULL, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
}

// ---- synthetic terrain ----

RasterF32 gen_terrain(std::uint64_t seed, int size, double roughness) {
  if (size < 3 || ((size - 1) & (size - 2)) != 0)
    throw ValidationError("gen_terrain: size must be 2^k + 1 with k >= 1");
  if (!(roughness > 0.0 && roughness < 1.0))
    throw ValidationError("gen_terrain: roughness must lie in (0, 1)");
  Rng rng(seed);
  RasterF32 r(size, size);
  r.at(0, 0) = static_cast<float>(rng.uniform());
  r.at(0, size - 1) = static_cast<float>(rng.uniform());
  r.at(size - 1, 0) = static_cast<float>(rng.uniform());
  r.at(size - 1, size - 1) = static_cast<float>(rng.uniform());

  double amp = 0.5;
  for (int step = size - 1; step > 1; step /= 2, amp *= roughness) {
    const int half = step / 2;
    // diamond step
    for (int y = half; y < size; y += step)
      for (int x = half; x < size; x += step) {
        const double avg = (r.at(y - half, x - half) + r.at(y - half, x + half) +
                            r.at(y + half, x - half) + r.at(y + half, x + half)) / 4.0;
        r.at(y, x) = static_cast<float>(avg + rng.uniform(-amp, amp));
      }
    // square step
    for (int y = 0; y < size; y += half)
      for (int x = (y / half) % 2 == 0 ? half : 0; x < size; x += step) {
        double sum = 0.0;
        int cnt = 0;
        if (y - half >= 0) sum += r.at(y - half, x), ++cnt;
        if (y + half < size) sum += r.at(y + half, x), ++cnt;
        if (x - half >= 0) sum += r.at(y, x - half), ++cnt;
        if (x + half < size) sum += r.at(y, x + half), ++cnt;
        r.at(y, x) = static_cast<float>(sum / cnt + rng.uniform(-amp, amp));
      }
  }

  float lo = r.data[0], hi = r.data[0];
  for (float v : r.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo)
    for (float& v : r.data) v = (v - lo) / (hi - lo);
  else
    std::fill(r.data.begin(), r.data.end(), 0.0f);
  return r;
}

namespace {

RasterF32 gaussian_blur(const RasterF32& in, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;

  auto reflect = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  RasterF32 tmp(in.height, in.width), out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * in.at(y, reflect(x + i, in.width));
      tmp.at(y, x) = static_cast<float>(acc);
    }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(reflect(y + i, in.height), x);
      out.at(y, x) = static_cast<float>(acc);
    }
  return out;
}

double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
}

// endpoint-aligned bicubic resize, exact on the decimation grid
RasterF32 bicubic_resize(const RasterF32& in, int out_h, int out_w) {
  RasterF32 out(out_h, out_w);
  auto clampi = [](int i, int n) { return std::min(n - 1, std::max(0, i)); };
  const double sy = out_h > 1 ? static_cast<double>(in.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(in.width - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y1 = static_cast<int>(std::floor(fy));
    const double ty = fy - y1;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x1 = static_cast<int>(std::floor(fx));
      const double tx = fx - x1;
      double col[4];
      for (int j = 0; j < 4; ++j) {
        const int yy = clampi(y1 - 1 + j, in.height);
        col[j] = catmull_rom(in.at(yy, clampi(x1 - 1, in.width)),
                             in.at(yy, clampi(x1, in.width)),
                             in.at(yy, clampi(x1 + 1, in.width)),
                             in.at(yy, clampi(x1 + 2, in.width)), tx);
      }
      out.at(y, x) = static_cast<float>(catmull_rom(col[0], col[1], col[2], col[3], ty));
    }
  }
  return out;
}

}  // namespace

RasterF32 degrade(const RasterF32& dem, int factor, double blur_sigma) {
  if (factor < 1) throw ValidationError("degrade: factor must be >= 1");
  if (factor > 1 && (dem.height - 1) % factor != 0)
    throw ValidationError("degrade: factor must divide dimensions-1");
  if (factor > 1 && (dem.width - 1) % factor != 0)
    throw ValidationError("degrade: factor must divide dimensions-1");

  RasterF32 cur = blur_sigma > 0.0 ? gaussian_blur(dem, blur_sigma) : dem;
  if (factor == 1) return cur;

  RasterF32 coarse((dem.height - 1) / factor + 1, (dem.width - 1) / factor + 1);
  for (int y = 0; y < coarse.height; ++y)
    for (int x = 0; x < coarse.width; ++x)
      coarse.at(y, x) = cur.at(y * factor, x * factor);
  return bicubic_resize(coarse, dem.height, dem.width);
}

std::array<RasterF32, 3> hillshade_prior(const RasterF32& dem, double azimuth_deg,
                                         double altitude_deg) {
  if (dem.height < 3 || dem.width < 3)
    throw ValidationError("hillshade_prior: raster must be at least 3x3");
  const double az = azimuth_deg * M_PI / 180.0;
  const double alt = altitude_deg * M_PI / 180.0;
  // light direction, az clockwise from north (=-y), alt above horizon
  const double lx = std::sin(az) * std::cos(alt);
  const double ly = -std::cos(az) * std::cos(alt);
  const double lz = std::sin(alt);

  RasterF32 shade(dem.height, dem.width), slope(dem.height, dem.width),
      elev(dem.height, dem.width);
  auto clampi = [](int i, int n) { return std::min(n - 1, std::max(0, i)); };
  for (int y = 0; y < dem.height; ++y)
    for (int x = 0; x < dem.width; ++x) {
      const double dzdx =
          (dem.at(y, clampi(x + 1, dem.width)) - dem.at(y, clampi(x - 1, dem.width))) / 2.0;
      const double dzdy =
          (dem.at(clampi(y + 1, dem.height), x) - dem.at(clampi(y - 1, dem.height), x)) / 2.0;
      const double norm = std::sqrt(dzdx * dzdx + dzdy * dzdy + 1.0);
      const double ndotl = (-dzdx * lx - dzdy * ly + lz) / norm;
      shade.at(y, x) = static_cast<float>(std::max(0.0, ndotl));
      slope.at(y, x) = static_cast<float>(std::sqrt(dzdx * dzdx + dzdy * dzdy));
      elev.at(y, x) = dem.at(y, x);
    }

  auto minmax01 = [](RasterF32& r) {
    float lo = r.data[0], hi = r.data[0];
    for (float v : r.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo)
      for (float& v : r.data) v = (v - lo) / (hi - lo);
    else
      std::fill(r.data.begin(), r.data.end(), 0.0f);
  };
  minmax01(slope);
  minmax01(elev);
  return {std::move(shade), std::move(slope), std::move(elev)};
}

MetricsRecord eval_metrics(const nn::Tensor& pred, const nn::Tensor& truth,
                           double data_range) {
  if (!pred.same_shape(truth)) throw ShapeError("eval_metrics: shape mismatch");
  MetricsRecord r;
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - truth.data[i];
    se += d * d;
    ae += std::abs(d);
  }
  r.mse = se / static_cast<double>(pred.numel());
  r.rmse = std::sqrt(r.mse);
  r.mae = ae / static_cast<double>(pred.numel());
  r.psnr = r.mse == 0.0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(data_range * data_range / r.mse);
  losses::SsimConfig scfg;
  scfg.dynamic_range = data_range;
  r.ssim_pct = 100.0 * losses::mean_ssim(pred, truth, scfg);
  return r;
}

void write_raster_sdem(const std::string& path, const RasterF32& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("sdem: cannot open for write: " + path);
  f.write("SDEM", 4);
  write_le_u32(f, static_cast<std::uint32_t>(r.height));
  write_le_u32(f, static_cast<std::uint32_t>(r.width));
  write_le_u32(f, 0u);
  f.write(reinterpret_cast<const char*>(r.data.data()),
          static_cast<std::streamsize>(r.data.size() * 4));
  if (!f) throw IoError("sdem: write failed: " + path);
}

RasterF32 read_raster_sdem(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("sdem: cannot open " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "SDEM")
    throw FormatError("sdem: bad magic in " + path);
  const int h = static_cast<int>(read_le_u32(f, path));
  const int w = static_cast<int>(read_le_u32(f, path));
  read_le_u32(f, path);  // reserved
  RasterF32 r(h, w);
  if (!f.read(reinterpret_cast<char*>(r.data.data()),
              static_cast<std::streamsize>(r.data.size() * 4)))
    throw FormatError("sdem: truncated payload in " + path);
  return r;
}

void write_raster_pgm16(const std::string& path, const RasterF32& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("pgm: cannot open for write: " + path);
  f << "P5\n" << r.width << " " << r.height << "\n65535\n";
  for (float v : r.data) {
    const double c = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    const auto s = static_cast<std::uint16_t>(std::lround(c * 65535.0));
    const unsigned char b[2] = {static_cast<unsigned char>(s >> 8),
                                static_cast<unsigned char>(s & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!f) throw IoError("pgm: write failed: " + path);
}

nn::Tensor raster_to_tensor(const RasterF32& r) {
  nn::Tensor t({1, 1, r.height, r.width});
  std::copy(r.data.begin(), r.data.end(), t.data.begin());
  return t;
}

RasterF32 tensor_to_raster(const nn::Tensor& t, int n) {
  if (!t.is4d() || t.dim(1) != 1) throw ShapeError("tensor_to_raster: expected (N,1,H,W)");
  RasterF32 r(t.dim(2), t.dim(3));
  const std::size_t hw = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(n * hw),
            t.data.begin() + static_cast<std::ptrdiff_t>((n + 1) * hw), r.data.begin());
  return r;
}

}  // namespace sinkdem::data
