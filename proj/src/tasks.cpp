#include "frz/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "frz/errors.hpp"
#include "frz/rng.hpp"

namespace frz {

namespace {

void put_u32be(std::ofstream& f, std::uint32_t v) {
  char b[4] = {char((v >> 24) & 0xff), char((v >> 16) & 0xff), char((v >> 8) & 0xff), char(v & 0xff)};
  f.write(b, 4);
}

std::uint32_t get_u32be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open idx file: " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

Tensor load_idx_images(const std::string& path) {
  std::vector<std::uint8_t> b = read_all(path);
  if (b.size() < 16) throw format_error("idx image file truncated: " + path);
  if (get_u32be(b.data()) != 0x00000803)
    throw format_error("idx image magic mismatch in " + path);
  const std::uint32_t n = get_u32be(b.data() + 4);
  const std::uint32_t rows = get_u32be(b.data() + 8);
  const std::uint32_t cols = get_u32be(b.data() + 12);
  const std::size_t need = 16 + std::size_t(n) * rows * cols;
  if (b.size() != need) throw format_error("idx image payload size mismatch in " + path);
  Tensor t({int(n), 1, int(rows), int(cols)});
  for (std::size_t i = 0; i < std::size_t(n) * rows * cols; ++i) t.v[i] = float(b[16 + i]) / 255.0f;
  return t;
}

std::vector<int> load_idx_labels(const std::string& path) {
  std::vector<std::uint8_t> b = read_all(path);
  if (b.size() < 8) throw format_error("idx label file truncated: " + path);
  if (get_u32be(b.data()) != 0x00000801) throw format_error("idx label magic mismatch in " + path);
  const std::uint32_t n = get_u32be(b.data() + 4);
  if (b.size() != 8 + std::size_t(n)) throw format_error("idx label payload size mismatch in " + path);
  return std::vector<int>(b.begin() + 8, b.end());
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels, int count,
                      int rows, int cols) {
  if (int(pixels.size()) != count * rows * cols) throw contract_error("idx write: pixel count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw run_error("cannot write idx file: " + path);
  put_u32be(f, 0x00000803);
  put_u32be(f, std::uint32_t(count));
  put_u32be(f, std::uint32_t(rows));
  put_u32be(f, std::uint32_t(cols));
  f.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw run_error("cannot write idx file: " + path);
  put_u32be(f, 0x00000801);
  put_u32be(f, std::uint32_t(labels.size()));
  f.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

namespace {

// 8x8 glyph bitmaps, one byte per row, MSB = leftmost pixel
constexpr std::uint8_t kGlyphs[10][8] = {
    {0x3C, 0x66, 0xC3, 0xC3, 0xC3, 0xC3, 0x66, 0x3C},  // 0
    {0x18, 0x38, 0x78, 0x18, 0x18, 0x18, 0x18, 0x7E},  // 1
    {0x3C, 0x66, 0x06, 0x0C, 0x18, 0x30, 0x60, 0x7E},  // 2
    {0x7E, 0x0C, 0x18, 0x3C, 0x06, 0x06, 0x66, 0x3C},  // 3
    {0x0C, 0x1C, 0x3C, 0x6C, 0xCC, 0xFE, 0x0C, 0x0C},  // 4
    {0x7E, 0x60, 0x7C, 0x06, 0x06, 0x06, 0x66, 0x3C},  // 5
    {0x1C, 0x30, 0x60, 0x7C, 0x66, 0x66, 0x66, 0x3C},  // 6
    {0x7E, 0x06, 0x0C, 0x18, 0x30, 0x30, 0x30, 0x30},  // 7
    {0x3C, 0x66, 0x66, 0x3C, 0x66, 0x66, 0x66, 0x3C},  // 8
    {0x3C, 0x66, 0x66, 0x66, 0x3E, 0x06, 0x0C, 0x38},  // 9
};

void render_digit(int digit, Rng& rng, std::uint8_t* out) {
  const int dx = int(rng.below(3)) - 1;
  const int dy = int(rng.below(3)) - 1;
  const double intensity = rng.uniform(0.45, 1.0);
  const double noise_sd = 0.18;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const int sy = y - dy, sx = x - dx;
      double v = 0.0;
      if (sy >= 0 && sy < 8 && sx >= 0 && sx < 8)
        v = (kGlyphs[digit][sy] >> (7 - sx)) & 1 ? intensity : 0.0;
      v += rng.gauss(0.0, noise_sd);
      v = std::clamp(v, 0.0, 1.0);
      out[y * 8 + x] = std::uint8_t(std::lround(v * 255.0));
    }
  }
}

void synthesize_digits(const std::string& img_path, const std::string& lbl_path, int per_class,
                       Rng rng) {
  const int n = per_class * 10;
  std::vector<std::uint8_t> pixels(std::size_t(n) * 64);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
  // interleave classes so any prefix is balanced
  int i = 0;
  for (int rep = 0; rep < per_class; ++rep) {
    for (int d = 0; d < 10; ++d, ++i) {
      labels[std::size_t(i)] = std::uint8_t(d);
      render_digit(d, rng, pixels.data() + std::size_t(i) * 64);
    }
  }
  write_idx_images(img_path, pixels, n, 8, 8);
  write_idx_labels(lbl_path, labels);
}

}  // namespace

void ensure_digits8_files(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string train_img = dir + "/train-images-idx3-ubyte";
  const std::string train_lbl = dir + "/train-labels-idx1-ubyte";
  const std::string test_img = dir + "/test-images-idx3-ubyte";
  const std::string test_lbl = dir + "/test-labels-idx1-ubyte";
  if (fs::exists(train_img) && fs::exists(train_lbl) && fs::exists(test_img) && fs::exists(test_lbl))
    return;
  // fixed content seed: the task data is one immutable artifact, experiment
  // seeds only steer init and batch order
  Rng rng(0xD161758ULL);
  synthesize_digits(train_img, train_lbl, 400, rng.stream(1));
  synthesize_digits(test_img, test_lbl, 100, rng.stream(2));
}

namespace {

TaskData make_blobs(std::uint64_t seed) {
  const int dim = 16, classes = 3, n_train = 1024, n_test = 256, n_probe = 256;
  const double label_noise = 0.04;  // keeps a gradient trickle alive after separation
  Rng root(seed);
  Rng centers_rng = root.stream(1);
  std::vector<double> centers(std::size_t(classes) * dim);
  for (auto& c : centers) c = centers_rng.gauss(0.0, 1.2);

  auto fill = [&](Tensor& x, std::vector<int>* y, int n, Rng rng) {
    x = Tensor({n, dim});
    if (y) y->resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      int c = i % classes;
      if (y) (*y)[std::size_t(i)] = c;
      for (int d = 0; d < dim; ++d)
        x.v[std::size_t(i) * dim + d] = float(centers[std::size_t(c) * dim + d] + rng.gauss(0.0, 0.8));
    }
  };

  TaskData t;
  t.id = "blobs";
  t.input_shape = {dim};
  t.num_classes = classes;
  fill(t.train_x, &t.train_y, n_train, root.stream(2));
  fill(t.test_x, &t.test_y, n_test, root.stream(3));
  fill(t.probe_x, nullptr, n_probe, root.stream(4));
  Rng flip = root.stream(5);
  for (auto& y : t.train_y)
    if (flip.next_double() < label_noise) y = int(flip.below(std::uint64_t(classes)));
  return t;
}

TaskData make_spirals(std::uint64_t seed) {
  const int n_train = 1024, n_test = 256, n_probe = 256;
  Rng root(seed);
  auto fill = [&](Tensor& x, std::vector<int>* y, int n, Rng rng) {
    x = Tensor({n, 2});
    if (y) y->resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      int c = i % 2;
      if (y) (*y)[std::size_t(i)] = c;
      double u = rng.next_double();
      double r = 0.15 + 0.85 * u;
      double a = c * 3.14159265358979323846 + r * 3.5 * 3.14159265358979323846;
      x.v[std::size_t(i) * 2 + 0] = float(r * std::cos(a) + rng.gauss(0.0, 0.03));
      x.v[std::size_t(i) * 2 + 1] = float(r * std::sin(a) + rng.gauss(0.0, 0.03));
    }
  };
  TaskData t;
  t.id = "spirals";
  t.input_shape = {2};
  t.num_classes = 2;
  fill(t.train_x, &t.train_y, n_train, root.stream(2));
  fill(t.test_x, &t.test_y, n_test, root.stream(3));
  fill(t.probe_x, nullptr, n_probe, root.stream(4));
  return t;
}

TaskData make_digits8(const TaskConfig& cfg, std::uint64_t seed) {
  std::string dir = cfg.dir.empty() ? std::string("data/digits8") : cfg.dir;
  ensure_digits8_files(dir);
  TaskData t;
  t.id = "digits8";
  t.input_shape = {1, 8, 8};
  t.num_classes = 10;
  t.train_x = load_idx_images(dir + "/train-images-idx3-ubyte");
  t.train_y = load_idx_labels(dir + "/train-labels-idx1-ubyte");
  t.test_x = load_idx_images(dir + "/test-images-idx3-ubyte");
  t.test_y = load_idx_labels(dir + "/test-labels-idx1-ubyte");
  if (t.train_x.shape[0] != int(t.train_y.size()) || t.test_x.shape[0] != int(t.test_y.size()))
    throw format_error("digits8: image/label counts disagree");

  // seeded probe: 256 training images
  const int n = t.train_x.shape[0];
  const std::int64_t sample = 64;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
  Rng probe_rng = Rng(seed).stream(4);
  probe_rng.shuffle(idx);
  t.probe_x = Tensor({256, 1, 8, 8});
  for (int i = 0; i < 256; ++i)
    std::copy(t.train_x.v.begin() + std::size_t(idx[std::size_t(i)]) * sample,
              t.train_x.v.begin() + std::size_t(idx[std::size_t(i)] + 1) * sample,
              t.probe_x.v.begin() + std::size_t(i) * sample);
  return t;
}

}  // namespace

TaskData load_task(const TaskConfig& cfg, std::uint64_t seed) {
  if (cfg.id == "blobs") return make_blobs(seed);
  if (cfg.id == "spirals") return make_spirals(seed);
  if (cfg.id == "digits8") return make_digits8(cfg, seed);
  throw config_error("unknown task id '" + cfg.id + "'");
}

}  // namespace frz
