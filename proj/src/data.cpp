#include "mtal/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mtal/errors.hpp"
#include "mtal/rng.hpp"

namespace fs = std::filesystem;

namespace mtal {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
bool parse_int(const std::string& s, Int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::size_t meta_value(const std::map<std::string, std::string>& meta, const std::string& key,
                       const fs::path& file) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("malformed meta " + file.string() + ": missing " + key);
  std::size_t v = 0;
  if (!parse_int(it->second, v) || v == 0) {
    throw FormatError("malformed meta " + file.string() + ": " + key + "=" + it->second +
                      " is not a positive integer");
  }
  return v;
}

// Smooth random image: signed Gaussian blobs plus soft line strokes, defined
// on the unit square so it can be rendered at any resolution.
struct Pattern {
  struct Blob {
    double cx, cy, sigma, amp;
  };
  struct Stroke {
    double x0, y0, x1, y1, width, amp;
  };
  std::vector<Blob> blobs;
  std::vector<Stroke> strokes;
  double gain = 1.0;

  double raw(double u, double v) const {
    double s = 0.0;
    for (const auto& b : blobs) {
      const double du = u - b.cx, dv = v - b.cy;
      s += b.amp * std::exp(-(du * du + dv * dv) / (2.0 * b.sigma * b.sigma));
    }
    for (const auto& st : strokes) {
      const double ex = st.x1 - st.x0, ey = st.y1 - st.y0;
      const double len2 = ex * ex + ey * ey;
      double t = len2 > 0 ? ((u - st.x0) * ex + (v - st.y0) * ey) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = st.x0 + t * ex - u, py = st.y0 + t * ey - v;
      s += st.amp * std::exp(-(px * px + py * py) / (2.0 * st.width * st.width));
    }
    return s;
  }
  double operator()(double u, double v) const { return gain * raw(u, v); }
};

Pattern random_pattern(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.15, 0.85);
  std::uniform_real_distribution<double> mag(0.5, 1.0);
  std::uniform_real_distribution<double> sig(0.08, 0.18);
  std::uniform_real_distribution<double> wid(0.04, 0.07);
  std::bernoulli_distribution sign(0.5);
  Pattern p;
  for (int b = 0; b < 3; ++b) {
    p.blobs.push_back({pos(rng), pos(rng), sig(rng), (sign(rng) ? 1.0 : -1.0) * mag(rng)});
  }
  for (int s = 0; s < 2; ++s) {
    p.strokes.push_back(
        {pos(rng), pos(rng), pos(rng), pos(rng), wid(rng), (sign(rng) ? 1.0 : -1.0) * mag(rng)});
  }
  // Unit RMS on a reference grid.
  constexpr int kGrid = 32;
  double ss = 0.0;
  for (int y = 0; y < kGrid; ++y) {
    for (int x = 0; x < kGrid; ++x) {
      const double v = p.raw((x + 0.5) / kGrid, (y + 0.5) / kGrid);
      ss += v * v;
    }
  }
  const double rms = std::sqrt(ss / (kGrid * kGrid));
  p.gain = rms > 0 ? 1.0 / rms : 1.0;
  return p;
}

// Coordinates to sample the unrotated pattern at so that the rendered image
// is rotated counter-clockwise by quarter_turns * 90 degrees.
void unrotate(int quarter_turns, double& u, double& v) {
  for (int k = 0; k < ((quarter_turns % 4) + 4) % 4; ++k) {
    const double nu = 1.0 - v;
    const double nv = u;
    u = nu;
    v = nv;
  }
}

struct FamilyLatents {
  std::vector<std::vector<Pattern>> shared;             // [latent][channel]
  std::vector<std::vector<std::vector<Pattern>>> own;   // [task][class][channel]
};

std::size_t channel_source(const SyntheticTask& t, std::size_t c) {
  return t.channel_permutation.empty() ? c : t.channel_permutation[c];
}

std::size_t latent_index(const SyntheticTask& t, std::size_t k) {
  return t.class_map.empty() ? k : t.class_map[k];
}

FamilyLatents make_latents(const SyntheticTaskFamily& f) {
  std::size_t latents = 0, channels = 0;
  for (const auto& t : f.tasks) {
    for (std::size_t k = 0; k < t.classes; ++k) latents = std::max(latents, latent_index(t, k) + 1);
    channels = std::max(channels, t.dims.channels);
  }
  FamilyLatents out;
  auto shared_rng = make_rng(f.seed, {kDataStream, 0});
  out.shared.resize(latents);
  for (auto& per_channel : out.shared) {
    for (std::size_t c = 0; c < channels; ++c) per_channel.push_back(random_pattern(shared_rng));
  }
  for (std::size_t t = 0; t < f.tasks.size(); ++t) {
    auto own_rng = make_rng(f.seed, {kDataStream, 1, t});
    std::vector<std::vector<Pattern>> task(f.tasks[t].classes);
    for (auto& per_channel : task) {
      for (std::size_t c = 0; c < f.tasks[t].dims.channels; ++c) {
        per_channel.push_back(random_pattern(own_rng));
      }
    }
    out.own.push_back(std::move(task));
  }
  return out;
}

// Renders class k of task t with gain and a shift (in pixels) into dst.
void render(const SyntheticTaskFamily& f, const FamilyLatents& lat, std::size_t t, std::size_t k,
            double gain, double shift_x, double shift_y, std::span<float> dst,
            std::span<const double> noise) {
  const auto& task = f.tasks[t];
  const double r = f.relatedness;
  const double rc = std::sqrt(std::max(0.0, 1.0 - r * r));
  const auto& d = task.dims;
  std::size_t at = 0;
  for (std::size_t c = 0; c < d.channels; ++c) {
    const Pattern& shared = lat.shared[latent_index(task, k)][channel_source(task, c)];
    const Pattern& own = lat.own[t][k][c];
    for (std::size_t y = 0; y < d.height; ++y) {
      for (std::size_t x = 0; x < d.width; ++x, ++at) {
        const double u = (static_cast<double>(x) + 0.5 - shift_x) / static_cast<double>(d.width);
        const double v = (static_cast<double>(y) + 0.5 - shift_y) / static_cast<double>(d.height);
        double su = u, sv = v;
        unrotate(task.quarter_turns, su, sv);
        double value = 0.0;
        if (r != 0.0) value += r * shared(su, sv);
        if (rc != 0.0) value += rc * own(u, v);
        value = gain * value + (noise.empty() ? 0.0 : noise[at]);
        dst[at] = static_cast<float>(value);
      }
    }
  }
}

}  // namespace

void Dataset::validate() const {
  if (dims.size() == 0) throw FormatError("dataset has zero-sized examples");
  if (data.size() != labels.size() * dims.size()) {
    throw FormatError("dataset holds " + std::to_string(data.size()) + " values for " +
                      std::to_string(labels.size()) + " examples of " + to_string(dims));
  }
  for (std::size_t h = 0; h < labels.size(); ++h) {
    if (labels[h] < 0 || static_cast<std::size_t>(labels[h]) >= classes) {
      throw FormatError("label " + std::to_string(labels[h]) + " of example " +
                        std::to_string(h) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  {
    std::ofstream meta(dir / "meta", std::ios::trunc);
    meta << "channels=" << ds.dims.channels << "\nheight=" << ds.dims.height
         << "\nwidth=" << ds.dims.width << "\nclasses=" << ds.classes << "\ncount=" << ds.size()
         << "\n";
    if (!meta) throw FormatError("failed writing " + (dir / "meta").string());
  }
  {
    std::string bytes;
    bytes.reserve(ds.data.size() * 4);
    for (float v : ds.data) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
    std::ofstream out(dir / "data.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing " + (dir / "data.bin").string());
  }
  {
    std::ofstream out(dir / "labels.csv", std::ios::trunc);
    for (int y : ds.labels) out << y << '\n';
    if (!out) throw FormatError("failed writing " + (dir / "labels.csv").string());
  }
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw FormatError("cannot open " + meta_path.string());
  std::map<std::string, std::string> meta;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(meta_in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("malformed meta " + meta_path.string() + " line " +
                        std::to_string(line_no) + ": expected key=value");
    }
    meta[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  Dataset ds;
  ds.dims = {meta_value(meta, "channels", meta_path), meta_value(meta, "height", meta_path),
             meta_value(meta, "width", meta_path)};
  ds.classes = meta_value(meta, "classes", meta_path);
  const std::size_t count = meta_value(meta, "count", meta_path);

  const fs::path data_path = dir / "data.bin";
  std::ifstream data_in(data_path, std::ios::binary);
  if (!data_in) throw FormatError("cannot open " + data_path.string());
  std::string bytes((std::istreambuf_iterator<char>(data_in)), std::istreambuf_iterator<char>());
  const std::size_t expected = count * ds.dims.size() * 4;
  if (bytes.size() < expected) {
    throw FormatError("data.bin truncated: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError("data.bin has trailing bytes: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  ds.data.resize(count * ds.dims.size());
  for (std::size_t i = 0; i < ds.data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    }
    ds.data[i] = std::bit_cast<float>(bits);
  }

  const fs::path labels_path = dir / "labels.csv";
  std::ifstream labels_in(labels_path);
  if (!labels_in) throw FormatError("cannot open " + labels_path.string());
  line_no = 0;
  while (std::getline(labels_in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    long v = 0;
    if (!parse_int(t, v)) {
      throw FormatError("labels.csv line " + std::to_string(line_no) + ": '" + t +
                        "' is not an integer");
    }
    if (v < 0 || static_cast<std::size_t>(v) >= ds.classes) {
      throw FormatError("labels.csv line " + std::to_string(line_no) + ": label " +
                        std::to_string(v) + " outside [0, " + std::to_string(ds.classes) + ")");
    }
    ds.labels.push_back(static_cast<int>(v));
  }
  if (ds.labels.size() != count) {
    throw FormatError("labels.csv has " + std::to_string(ds.labels.size()) +
                      " labels, meta count is " + std::to_string(count));
  }
  return ds;
}

Split split_70_30(const Dataset& ds, std::uint64_t seed, SplitMode mode) {
  const std::size_t n = ds.size();
  if (n < 10) {
    throw std::invalid_argument("split_70_30 needs at least 10 examples, got " +
                                std::to_string(n));
  }
  auto rng = make_rng(seed, {kSplitStream});
  Split split;
  auto take = [&](std::vector<std::size_t> idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t train = (7 * idx.size() + 5) / 10;
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + train);
    split.test.insert(split.test.end(), idx.begin() + train, idx.end());
  };
  if (mode == SplitMode::Random) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    take(std::move(all));
  } else {
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t h = 0; h < n; ++h) by_class.at(ds.labels[h]).push_back(h);
    for (auto& idx : by_class) {
      if (!idx.empty()) take(std::move(idx));
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out{ds.dims, ds.classes, {}, {}};
  out.data.reserve(indices.size() * ds.dims.size());
  out.labels.reserve(indices.size());
  for (auto h : indices) {
    if (h >= ds.size()) throw std::out_of_range("subset: index " + std::to_string(h));
    auto ex = ds.example(h);
    out.data.insert(out.data.end(), ex.begin(), ex.end());
    out.labels.push_back(ds.labels[h]);
  }
  return out;
}

Normalization fit_normalization(const Dataset& train) {
  const auto& d = train.dims;
  const std::size_t plane = d.height * d.width;
  Normalization stats{std::vector<double>(d.channels, 0.0), std::vector<double>(d.channels, 1.0)};
  if (train.size() == 0) return stats;
  const double count = static_cast<double>(train.size() * plane);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double s = 0.0;
    for (std::size_t h = 0; h < train.size(); ++h) {
      auto ex = train.example(h).subspan(c * plane, plane);
      for (float v : ex) s += v;
    }
    const double mean = s / count;
    double ss = 0.0;
    for (std::size_t h = 0; h < train.size(); ++h) {
      auto ex = train.example(h).subspan(c * plane, plane);
      for (float v : ex) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / count);
    stats.mean[c] = mean;
    stats.stddev[c] = sd > 0.0 ? sd : 1.0;
  }
  return stats;
}

Dataset normalize(const Dataset& ds, const Normalization& stats) {
  if (stats.mean.size() != ds.dims.channels || stats.stddev.size() != ds.dims.channels) {
    throw ShapeError("normalize: statistics for " + std::to_string(stats.mean.size()) +
                     " channels, dataset has " + std::to_string(ds.dims.channels));
  }
  Dataset out = ds;
  const std::size_t plane = ds.dims.height * ds.dims.width;
  for (std::size_t h = 0; h < ds.size(); ++h) {
    for (std::size_t c = 0; c < ds.dims.channels; ++c) {
      float* p = out.data.data() + h * ds.dims.size() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        p[k] = static_cast<float>((p[k] - stats.mean[c]) / stats.stddev[c]);
      }
    }
  }
  return out;
}

Dataset resize_nearest(const Dataset& ds, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resize_nearest: zero target size");
  if (height == ds.dims.height && width == ds.dims.width) return ds;
  Dataset out{{ds.dims.channels, height, width}, ds.classes, {}, ds.labels};
  out.data.resize(ds.size() * out.dims.size());
  const std::size_t src_plane = ds.dims.height * ds.dims.width;
  for (std::size_t h = 0; h < ds.size(); ++h) {
    auto src = ds.example(h);
    float* dst = out.data.data() + h * out.dims.size();
    for (std::size_t c = 0; c < ds.dims.channels; ++c) {
      for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(ds.dims.height - 1, (y * ds.dims.height) / height);
        for (std::size_t x = 0; x < width; ++x) {
          const std::size_t sx = std::min(ds.dims.width - 1, (x * ds.dims.width) / width);
          *dst++ = src[c * src_plane + sy * ds.dims.width + sx];
        }
      }
    }
  }
  return out;
}

Dataset rotate_quarter_turns(const Dataset& ds, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k % 2 == 1 && ds.dims.height != ds.dims.width) {
    throw ShapeError("rotate_quarter_turns: odd turns need square images, got " +
                     to_string(ds.dims));
  }
  Dataset out = ds;
  const std::size_t n = ds.dims.width;
  const std::size_t hgt = ds.dims.height;
  const std::size_t plane = hgt * n;
  for (std::size_t h = 0; h < ds.size(); ++h) {
    for (std::size_t c = 0; c < ds.dims.channels; ++c) {
      std::vector<float> cur(ds.example(h).begin() + c * plane,
                             ds.example(h).begin() + (c + 1) * plane);
      for (int t = 0; t < k; ++t) {
        // new[y][x] = old[x][n-1-y] for square n x n (counter-clockwise).
        std::vector<float> next(plane);
        if (k % 2 == 1 || hgt == n) {
          for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) next[y * n + x] = cur[x * n + (n - 1 - y)];
          }
        } else {
          // Half turn on a rectangle: two reflections.
          for (std::size_t y = 0; y < hgt; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
              next[y * n + x] = cur[(hgt - 1 - y) * n + (n - 1 - x)];
            }
          }
          ++t;
        }
        cur.swap(next);
      }
      std::copy(cur.begin(), cur.end(), out.data.begin() + h * ds.dims.size() + c * plane);
    }
  }
  return out;
}

void SyntheticTaskFamily::validate() const {
  if (tasks.empty()) throw ConfigError("synthetic family needs at least one task");
  if (!(relatedness >= 0.0 && relatedness <= 1.0)) {
    throw ConfigError("relatedness must lie in [0, 1], got " + std::to_string(relatedness));
  }
  if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
  if (!(jitter >= 0.0)) throw ConfigError("jitter must be >= 0");
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    const std::string where = "task " + std::to_string(t);
    if (task.classes < 2) throw ConfigError(where + ": classes must be >= 2");
    if (task.dims.size() == 0) throw ConfigError(where + ": dims must be positive");
    if (task.examples < task.classes) throw ConfigError(where + ": fewer examples than classes");
    if (!task.channel_permutation.empty()) {
      auto p = task.channel_permutation;
      std::sort(p.begin(), p.end());
      for (std::size_t c = 0; c < p.size(); ++c) {
        if (p.size() != task.dims.channels || p[c] != c) {
          throw ConfigError(where + ": channel_permutation is not a permutation of channels");
        }
      }
    }
    if (!task.class_map.empty() && task.class_map.size() != task.classes) {
      throw ConfigError(where + ": class_map needs one entry per class");
    }
    if (task.quarter_turns % 2 != 0 && task.dims.height != task.dims.width) {
      throw ConfigError(where + ": odd quarter turns need square inputs");
    }
  }
}

std::vector<GeneratedTask> generate_tasks(const SyntheticTaskFamily& f) {
  f.validate();
  const FamilyLatents lat = make_latents(f);
  std::vector<GeneratedTask> out;
  for (std::size_t t = 0; t < f.tasks.size(); ++t) {
    const auto& task = f.tasks[t];
    auto rng = make_rng(f.seed, {kDataStream, 2});
    std::uniform_real_distribution<double> gain(0.8, 1.2);
    std::uniform_real_distribution<double> shift(-f.jitter, f.jitter);
    std::normal_distribution<double> noise(0.0, 1.0);

    GeneratedTask g;
    g.spec = {t, task.dims, task.classes};
    g.data.dims = task.dims;
    g.data.classes = task.classes;
    g.data.labels.resize(task.examples);
    for (std::size_t h = 0; h < task.examples; ++h) {
      g.data.labels[h] = static_cast<int>(h % task.classes);
    }
    std::shuffle(g.data.labels.begin(), g.data.labels.end(), rng);
    g.data.data.resize(task.examples * task.dims.size());
    std::vector<double> eps(task.dims.size());
    for (std::size_t h = 0; h < task.examples; ++h) {
      const double a = gain(rng);
      const double sx = shift(rng);
      const double sy = shift(rng);
      for (auto& e : eps) e = f.noise * noise(rng);
      render(f, lat, t, static_cast<std::size_t>(g.data.labels[h]), a, sx, sy,
             std::span<float>(g.data.data).subspan(h * task.dims.size(), task.dims.size()), eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::vector<float>> class_prototypes(const SyntheticTaskFamily& f, std::size_t task) {
  f.validate();
  const FamilyLatents lat = make_latents(f);
  const auto& t = f.tasks.at(task);
  std::vector<std::vector<float>> out(t.classes, std::vector<float>(t.dims.size()));
  for (std::size_t k = 0; k < t.classes; ++k) render(f, lat, task, k, 1.0, 0.0, 0.0, out[k], {});
  return out;
}

std::vector<int> batch_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto h : indices) out.push_back(ds.labels.at(h));
  return out;
}

}  // namespace mtal
