#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frz/tensor.hpp"

namespace frz {

struct TaskConfig {
  std::string id;   // blobs | spirals | digits8
  std::string dir;  // digits8: directory holding the IDX files
};

// Desk-scale classification task with a fixed, seeded probe batch reused
// for every CKA measurement.
struct TaskData {
  std::string id;
  Shape input_shape;
  int num_classes = 0;
  Tensor train_x;
  std::vector<int> train_y;
  Tensor test_x;
  std::vector<int> test_y;
  Tensor probe_x;  // 256 samples
};

TaskData load_task(const TaskConfig& cfg, std::uint64_t seed);

// IDX ingestion (big-endian dims per the convention). Pixels normalize to
// [0,1]; magic 0x00000803 for images, 0x00000801 for labels.
Tensor load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels, int count,
                      int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// Synthesizes the digits8 IDX files (glyph renders with shift, intensity and
// noise jitter) into dir if they are not already present.
void ensure_digits8_files(const std::string& dir);

}  // namespace frz
