#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facechannel/manifest.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

/// Desk-scale stand-in for a facial-expression corpus: cartoon faces whose eye
/// openness drives arousal and whose mouth curvature drives valence.
struct SynthSpec {
  enum class Task { kCategorical, kDimensional };

  std::size_t n_samples = 64;
  Task task = Task::kCategorical;
  std::size_t classes = 4;
  /// Categorical grid; 0 picks the most square factorisation of `classes`
  /// with no more arousal bins than valence bins.
  std::size_t arousal_bins = 0;
  std::size_t valence_bins = 0;
  std::size_t image_size = 48;
  double noise_level = 0.05;
  std::uint64_t seed = 0;

  /// Throws ParameterError on n_samples == 0, noise outside [0,1) or an inconsistent grid.
  void validate() const;
  /// (arousal_bins, valence_bins) with arousal_bins * valence_bins == classes.
  std::pair<std::size_t, std::size_t> grid() const;

  /// Parses "n=64,task=categorical:4,size=48,noise=0.05,seed=1,grid=2x2" or a JSON object.
  static SynthSpec parse(std::string_view text);
};

struct FaceParams {
  double eye_openness = 0.5;     // e in [0,1]
  double mouth_curvature = 0.0;  // c in [-1,1], positive = smile
  double offset_x = 0.0;         // head jitter, fraction of the image side
  double offset_y = 0.0;
};

/// Pixel-space rectangle [x0,x1) x [y0,y1).
struct Box {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(std::size_t x, std::size_t y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct FaceRegions {
  Box left_eye;
  Box right_eye;
  Box mouth;
};

FaceRegions face_regions(const FaceParams& face, std::size_t size);

/// Renders one [1,size,size] face in [0,1]; noise draws come from `rng`.
Tensor<float> render_face(const FaceParams& face, std::size_t size, double noise_level, Rng& rng);

/// Draws the per-sample face parameters for a spec (deterministic in spec.seed).
std::vector<FaceParams> synth_sample_params(const SynthSpec& spec);

/// Exact label of a face under a spec: grid cell arousal_bin * valence_bins + valence_bin,
/// or (2e - 1, c) for the dimensional task.
Target synth_label(const FaceParams& face, const SynthSpec& spec);
std::vector<std::string> synth_class_names(const SynthSpec& spec);

/// Writes face_NNNNN.pgm files, manifest.csv, classes.txt (categorical) and
/// faces.csv (generation parameters) into `out_dir`. Throws IoError when the
/// directory cannot be created or written.
Manifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace facechannel
