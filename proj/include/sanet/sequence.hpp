#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sanet/bbox.hpp"
#include "sanet/image.hpp"
#include "sanet/tensor.hpp"

namespace sanet {

struct Sequence {
  std::string name;
  std::vector<Image> frames;
  std::vector<BBox> groundtruth;  // one per frame, or only the first

  std::size_t size() const { return frames.size(); }
};

// One box per non-empty line, fields separated by commas, tabs or spaces,
// 1-based on disk. Returned boxes are 0-based.
std::vector<BBox> parse_groundtruth(const std::string& text);
std::string format_groundtruth(const std::vector<BBox>& boxes);

// <dir>/img/*.ppm in filename order plus <dir>/groundtruth_rect.txt.
Sequence load_sequence(const std::filesystem::path& dir);
void save_sequence(const Sequence& seq, const std::filesystem::path& dir);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct SynthObject {
  double x = 0, y = 0;    // top-left at frame 0
  double vx = 0, vy = 0;  // pixels per frame
};

struct SynthSpec {
  std::string name = "synth";
  std::size_t width = 96;
  std::size_t height = 96;
  std::size_t length = 30;
  std::size_t patch_width = 24;
  std::size_t patch_height = 24;
  Rgb base_color{170, 90, 60};
  int texture_contrast = 70;  // sub-block offsets around the base colour
  Rgb background{90, 110, 100};
  int background_noise = 12;  // uniform ± per channel
  SynthObject target{8, 20, 1.5, 0.5};
  bool distractor = true;
  SynthObject distractor_motion{64, 56, -1.5, -0.5};
  // Cell order of the distractor's 3x3 grid; any non-identity permutation.
  std::array<int, 9> distractor_layout{2, 0, 1, 5, 3, 4, 8, 6, 7};
  int motion_noise = 1;  // integer jitter ± per frame and axis
  double min_separation = 4;
  std::uint64_t seed = 0;

  // A random scene: colours, start positions and velocities drawn from the
  // seed, the two objects sweeping past each other in adjacent lanes.
  static SynthSpec randomized(std::uint64_t seed, std::size_t length = 30);
};

// The 3x3 cell colours of the target patch.
std::array<Rgb, 9> synth_palette(const SynthSpec& spec);

struct SynthResult {
  Sequence sequence;
  std::vector<BBox> distractor_boxes;  // empty without a distractor
};

SynthResult synth_sequence(const SynthSpec& spec);

// Axis gap between two boxes; zero or negative when they overlap.
double box_gap(const BBox& a, const BBox& b);

// Bilinear resampling of `box` to out×out, normalised as
// (pixel − mean) · scale. Samples falling outside the frame are zero.
template <typename T>
Tensor<T> crop_resize_patch(const Image& frame, const BBox& box, std::size_t out,
                            const std::array<double, 3>& mean, double scale);

}  // namespace sanet
