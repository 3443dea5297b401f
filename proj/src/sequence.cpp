#include "sanet/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sanet/rng.hpp"

namespace sanet {

namespace fs = std::filesystem;

std::vector<BBox> parse_groundtruth(const std::string& text) {
  std::vector<BBox> boxes;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (char& c : line) {
      if (c == ',' || c == '\t' || c == '\r') c = ' ';
    }
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream fields(line);
    std::vector<double> v;
    std::string tok;
    while (fields >> tok) {
      std::size_t used = 0;
      double value = 0;
      try {
        value = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(value)) {
        throw FormatError("groundtruth line " + std::to_string(lineno) + ": '" + tok + "' is not a number");
      }
      v.push_back(value);
    }
    if (v.size() != 4) {
      throw FormatError("groundtruth line " + std::to_string(lineno) + ": expected 4 fields (x,y,w,h), found " +
                        std::to_string(v.size()));
    }
    if (v[2] <= 0 || v[3] <= 0) {
      throw FormatError("groundtruth line " + std::to_string(lineno) + ": width and height must be positive");
    }
    boxes.push_back({v[0] - 1.0, v[1] - 1.0, v[2], v[3]});
  }
  if (boxes.empty()) throw FormatError("groundtruth file has no boxes");
  return boxes;
}

std::string format_groundtruth(const std::vector<BBox>& boxes) {
  std::string out;
  char line[128];
  for (const auto& b : boxes) {
    std::snprintf(line, sizeof line, "%.10g,%.10g,%.10g,%.10g\n", b.x + 1.0, b.y + 1.0, b.w, b.h);
    out += line;
  }
  return out;
}

Sequence load_sequence(const fs::path& dir) {
  const fs::path img = dir / "img";
  const fs::path gt = dir / "groundtruth_rect.txt";
  if (!fs::is_directory(img)) throw FormatError(dir.string() + ": missing img/ directory");
  if (!fs::is_regular_file(gt)) throw FormatError(dir.string() + ": missing groundtruth_rect.txt");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(img)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".ppm") {
      throw FormatError(entry.path().string() + ": unsupported frame format (only binary PPM is read)");
    }
    files.push_back(entry.path());
  }
  if (files.empty()) throw FormatError(img.string() + ": no frames");
  std::sort(files.begin(), files.end());

  Sequence seq;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      seq.frames.push_back(read_ppm(files[i]));
    } catch (const std::exception& e) {
      throw FormatError("frame " + std::to_string(i + 1) + ": " + e.what());
    }
    const Image& f = seq.frames.back();
    if (f.width != seq.frames.front().width || f.height != seq.frames.front().height) {
      throw FormatError("frame " + std::to_string(i + 1) + " is " + std::to_string(f.width) + "x" +
                        std::to_string(f.height) + ", expected " + std::to_string(seq.frames.front().width) +
                        "x" + std::to_string(seq.frames.front().height));
    }
  }
  try {
    seq.groundtruth = parse_groundtruth(read_file(gt));
  } catch (const FormatError& e) {
    throw FormatError(gt.string() + ": " + e.what());
  }
  if (seq.groundtruth.size() != 1 && seq.groundtruth.size() != seq.frames.size()) {
    throw FormatError(gt.string() + ": " + std::to_string(seq.groundtruth.size()) + " boxes for " +
                      std::to_string(seq.frames.size()) + " frames");
  }
  return seq;
}

void save_sequence(const Sequence& seq, const fs::path& dir) {
  fs::create_directories(dir / "img");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.ppm", i + 1);
    write_ppm(dir / "img" / name, seq.frames[i]);
  }
  write_file(dir / "groundtruth_rect.txt", format_groundtruth(seq.groundtruth));
}

namespace {

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

Rgb random_color(Rng& rng) {
  return {clamp_byte(60 + int(rng.below(140))), clamp_byte(60 + int(rng.below(140))),
          clamp_byte(60 + int(rng.below(140)))};
}

void paint(Image& img, const BBox& box, const std::array<Rgb, 9>& palette, const std::array<int, 9>& layout) {
  const auto x0 = static_cast<std::size_t>(box.x), y0 = static_cast<std::size_t>(box.y);
  const auto w = static_cast<std::size_t>(box.w), h = static_cast<std::size_t>(box.h);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const Rgb c = palette[layout[(i * 3 / h) * 3 + (j * 3 / w)]];
      img.at(x0 + j, y0 + i, 0) = c.r;
      img.at(x0 + j, y0 + i, 1) = c.g;
      img.at(x0 + j, y0 + i, 2) = c.b;
    }
  }
}

}  // namespace

SynthSpec SynthSpec::randomized(std::uint64_t seed, std::size_t length) {
  SynthSpec s;
  Rng rng(seed ^ 0x5bd1e995ULL);
  s.seed = seed;
  s.name = "synth-" + std::to_string(seed);
  s.length = length;
  s.base_color = random_color(rng);
  s.background = random_color(rng);
  const double span = double(s.width - s.patch_width);
  const double travel = std::min(1.6 * double(length), span - 4.0);
  const double speed = travel / double(std::max<std::size_t>(1, length - 1));
  const bool target_on_top = rng.below(2) == 0;
  const double lane_a = 8 + double(rng.below(8));
  const double lane_b = lane_a + double(s.patch_height) + s.min_separation + double(rng.below(4));
  const double start = 2 + double(rng.below(std::max<std::size_t>(1, static_cast<std::size_t>(span - travel - 2))));
  s.target = {start, target_on_top ? lane_a : lane_b, speed, 0.0};
  s.distractor_motion = {start + travel, target_on_top ? lane_b : lane_a, -speed, 0.0};
  if (rng.below(2)) {
    std::swap(s.target.x, s.distractor_motion.x);
    std::swap(s.target.vx, s.distractor_motion.vx);
  }
  return s;
}

std::array<Rgb, 9> synth_palette(const SynthSpec& spec) {
  // fixed signed offsets give each cell a distinct shade of the base colour
  static constexpr int kOffsets[9][3] = {{1, 0, -1}, {-1, 1, 0}, {0, -1, 1}, {1, 1, -1}, {-1, -1, -1},
                                          {1, -1, 1}, {-1, 1, 1}, {0, 1, -1}, {1, 1, 1}};
  std::array<Rgb, 9> p{};
  const int k = spec.texture_contrast;
  for (int c = 0; c < 9; ++c) {
    p[c] = {clamp_byte(spec.base_color.r + kOffsets[c][0] * k), clamp_byte(spec.base_color.g + kOffsets[c][1] * k),
            clamp_byte(spec.base_color.b + kOffsets[c][2] * k)};
  }
  return p;
}

double box_gap(const BBox& a, const BBox& b) {
  const double gx = std::max(a.x, b.x) - std::min(a.x + a.w, b.x + b.w);
  const double gy = std::max(a.y, b.y) - std::min(a.y + a.h, b.y + b.h);
  return std::max(gx, gy);
}

SynthResult synth_sequence(const SynthSpec& spec) {
  if (spec.length == 0) throw std::invalid_argument("synthetic sequence needs at least one frame");
  if (spec.patch_width < 3 || spec.patch_height < 3) throw std::invalid_argument("patch must be at least 3x3");
  if (spec.patch_width > spec.width || spec.patch_height > spec.height) {
    throw std::invalid_argument("patch does not fit in the frame");
  }
  if (spec.min_separation < 0) throw std::invalid_argument("minimum separation must be non-negative");
  std::array<int, 9> identity{0, 1, 2, 3, 4, 5, 6, 7, 8};
  auto sorted = spec.distractor_layout;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != identity || spec.distractor_layout == identity) {
    throw std::invalid_argument("distractor layout must be a non-identity permutation of 0..8");
  }

  const double pw = double(spec.patch_width), ph = double(spec.patch_height);
  const double max_x = double(spec.width) - pw, max_y = double(spec.height) - ph;
  auto planned = [&](const SynthObject& o, std::size_t t, const char* what) {
    const BBox b{std::round(o.x + o.vx * double(t)), std::round(o.y + o.vy * double(t)), pw, ph};
    if (b.x < 0 || b.y < 0 || b.x > max_x || b.y > max_y) {
      throw std::invalid_argument(std::string("infeasible motion: ") + what + " leaves the frame at frame " +
                                  std::to_string(t + 1) + " " + to_string(b));
    }
    return b;
  };

  Rng rng(spec.seed);
  const auto palette = synth_palette(spec);
  SynthResult out;
  out.sequence.name = spec.name;
  for (std::size_t t = 0; t < spec.length; ++t) {
    BBox target = planned(spec.target, t, "target");
    BBox distractor;
    if (spec.distractor) {
      distractor = planned(spec.distractor_motion, t, "distractor");
      if (box_gap(target, distractor) < spec.min_separation) {
        throw std::invalid_argument("infeasible motion: target and distractor closer than " +
                                    std::to_string(spec.min_separation) + " px at frame " + std::to_string(t + 1));
      }
    }
    auto jitter = [&](BBox b) {
      const int n = spec.motion_noise;
      if (n <= 0) return b;
      b.x = std::clamp(b.x + double(int(rng.below(2 * n + 1)) - n), 0.0, max_x);
      b.y = std::clamp(b.y + double(int(rng.below(2 * n + 1)) - n), 0.0, max_y);
      return b;
    };
    const BBox jt = jitter(target);
    if (spec.distractor) {
      const BBox jd = jitter(distractor);
      if (box_gap(jt, jd) >= spec.min_separation) {
        target = jt;
        distractor = jd;
      }
    } else {
      target = jt;
    }

    Image frame(spec.width, spec.height);
    const int noise = spec.background_noise;
    for (std::size_t i = 0; i < frame.pixels.size(); i += 3) {
      const int d0 = noise > 0 ? int(rng.below(2 * noise + 1)) - noise : 0;
      const int d1 = noise > 0 ? int(rng.below(2 * noise + 1)) - noise : 0;
      const int d2 = noise > 0 ? int(rng.below(2 * noise + 1)) - noise : 0;
      frame.pixels[i] = clamp_byte(spec.background.r + d0);
      frame.pixels[i + 1] = clamp_byte(spec.background.g + d1);
      frame.pixels[i + 2] = clamp_byte(spec.background.b + d2);
    }
    if (spec.distractor) {
      paint(frame, distractor, palette, spec.distractor_layout);
      out.distractor_boxes.push_back(distractor);
    }
    paint(frame, target, palette, identity);
    out.sequence.frames.push_back(std::move(frame));
    out.sequence.groundtruth.push_back(target);
  }
  return out;
}

template <typename T>
Tensor<T> crop_resize_patch(const Image& frame, const BBox& box, std::size_t out,
                            const std::array<double, 3>& mean, double scale) {
  if (!box.valid() || !std::isfinite(box.x) || !std::isfinite(box.y)) {
    throw std::invalid_argument("degenerate crop box " + to_string(box));
  }
  if (out == 0) throw std::invalid_argument("crop output size must be positive");
  const double W = double(frame.width), H = double(frame.height);
  Tensor<T> patch(Shape{out, out, 3});
  const double sy = box.h / double(out), sx = box.w / double(out);
  for (std::size_t i = 0; i < out; ++i) {
    // pixel centres of the output grid mapped into the frame
    const double y = box.y + (double(i) + 0.5) * sy - 0.5;
    if (y < -0.5 || y > H - 0.5) continue;
    const double yc = std::clamp(y, 0.0, H - 1.0);
    const auto y0 = static_cast<std::size_t>(yc);
    const std::size_t y1 = std::min(y0 + 1, frame.height - 1);
    const double fy = yc - double(y0);
    for (std::size_t j = 0; j < out; ++j) {
      const double x = box.x + (double(j) + 0.5) * sx - 0.5;
      if (x < -0.5 || x > W - 0.5) continue;
      const double xc = std::clamp(x, 0.0, W - 1.0);
      const auto x0 = static_cast<std::size_t>(xc);
      const std::size_t x1 = std::min(x0 + 1, frame.width - 1);
      const double fx = xc - double(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - fx) * frame.at(x0, y0, c) + fx * frame.at(x1, y0, c);
        const double bottom = (1 - fx) * frame.at(x0, y1, c) + fx * frame.at(x1, y1, c);
        patch(i, j, c) = static_cast<T>(((1 - fy) * top + fy * bottom - mean[c]) * scale);
      }
    }
  }
  return patch;
}

template Tensor<float> crop_resize_patch(const Image&, const BBox&, std::size_t, const std::array<double, 3>&, double);
template Tensor<double> crop_resize_patch(const Image&, const BBox&, std::size_t, const std::array<double, 3>&, double);

}  // namespace sanet
