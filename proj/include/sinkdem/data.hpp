#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sinkdem/losses.hpp"
#include "sinkdem/metrics.hpp"
#include "sinkdem/tensor.hpp"

namespace sinkdem::data {

struct MnistSet {
  int count = 0, rows = 0, cols = 0;
  std::vector<float> images;          // count*rows*cols, scaled to [0,1]
  std::vector<unsigned char> labels;  // retained though denoising ignores them
};

struct IdxContent {
  bool is_images = false;
  int count = 0, rows = 0, cols = 0;
  std::vector<float> images;
  std::vector<unsigned char> labels;
};

// Parses a single IDX file; magic 0x00000803 selects image mode and
// 0x00000801 label mode, dimensions big-endian, pixels scaled by 1/255.
IdxContent read_idx(const std::string& path);

// Reads the image/label pair into one set.
MnistSet load_mnist(const std::string& images_path, const std::string& labels_path);

void write_idx_images(const std::string& path, const std::vector<float>& images,
                      int count, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels);

// Deterministic glyph-rendered digit corpus in the exact MNIST IDX layout;
// the desk-scale stand-in used when the official files are not on disk.
// Writes train-images-idx3-ubyte / train-labels-idx1-ubyte and the t10k pair.
void write_digit_fixture(const std::string& dir, int train_count, int test_count,
                         std::uint64_t seed);

struct RasterF32 {
  int height = 0, width = 0;
  std::vector<float> data;  // row-major
  float nodata = -9999.0f;  // sentinel, unused by the synthetic pipeline

  RasterF32() = default;
  RasterF32(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w) {}
  float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Diamond-square fractal heightfield on a (2^k + 1) grid, min-max normalized
// to [0,1], deterministic per seed.
RasterF32 gen_terrain(std::uint64_t seed, int size, double roughness);

// Gaussian blur + decimation + bicubic re-upsampling to the original size,
// the synthetic coarse-resolution input.
RasterF32 degrade(const RasterF32& dem, int factor, double blur_sigma);

// Pseudo image prior: Lambertian hillshade, normalized slope magnitude and
// normalized elevation, each in [0,1].
std::array<RasterF32, 3> hillshade_prior(const RasterF32& dem, double azimuth_deg = 315.0,
                                         double altitude_deg = 45.0);

// RMSE / MAE / PSNR / SSIM% between same-shape single-channel tensors;
// psnr is +inf when mse == 0 (serialized as "inf").
MetricsRecord eval_metrics(const nn::Tensor& pred, const nn::Tensor& truth,
                           double data_range);

// Raw little-endian f32 raster: magic "SDEM", u32 height, u32 width,
// u32 reserved, then the payload. Bit-exact round trip.
void write_raster_sdem(const std::string& path, const RasterF32& r);
RasterF32 read_raster_sdem(const std::string& path);

// 16-bit binary PGM preview of a [0,1] raster, big-endian samples.
void write_raster_pgm16(const std::string& path, const RasterF32& r);

nn::Tensor raster_to_tensor(const RasterF32& r);
RasterF32 tensor_to_raster(const nn::Tensor& t, int n = 0);

}  // namespace sinkdem::data
