#include "facechannel/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "facechannel/error.hpp"
#include "facechannel/netpbm.hpp"

namespace facechannel {

namespace {

// Face layout in unit coordinates (x right, y down).
constexpr double kBackground = 0.15;
constexpr double kSkin = 0.75;
constexpr double kFeature = 0.05;
constexpr double kHeadCx = 0.5, kHeadCy = 0.52, kHeadRx = 0.36, kHeadRy = 0.44;
constexpr double kEyeY = 0.40, kLeftEyeX = 0.35, kRightEyeX = 0.65;
constexpr double kEyeRx = 0.075, kEyeRyMin = 0.012, kEyeRyRange = 0.06;
constexpr double kMouthY = 0.72, kMouthHalfWidth = 0.16, kMouthBend = 0.07, kMouthThickness = 0.018;
constexpr double kMaxJitter = 0.03;
constexpr double kCellMargin = 0.1;
constexpr double kRegionPad = 0.02;

Box to_box(double x0, double y0, double x1, double y1, std::size_t size) {
  const auto px = [size](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor(v * static_cast<double>(size)), 0.0,
                                               static_cast<double>(size)));
  };
  const auto px_end = [size](double v) {
    return static_cast<std::size_t>(std::clamp(std::ceil(v * static_cast<double>(size)), 0.0,
                                               static_cast<double>(size)));
  };
  return {px(x0), px(y0), px_end(x1), px_end(y1)};
}

}  // namespace

void SynthSpec::validate() const {
  if (n_samples == 0) throw ParameterError("synth: n_samples must be >= 1");
  if (!(noise_level >= 0.0 && noise_level < 1.0)) throw ParameterError("synth: noise_level must be in [0,1)");
  if (image_size < 8) throw ParameterError("synth: image_size must be >= 8");
  if (task == Task::kCategorical) {
    if (classes < 2) throw ParameterError("synth: categorical task needs >= 2 classes");
    if ((arousal_bins == 0) != (valence_bins == 0)) {
      throw ParameterError("synth: set both grid dimensions or neither");
    }
    if (arousal_bins && arousal_bins * valence_bins != classes) {
      throw ParameterError("synth: grid does not multiply to the class count");
    }
  }
}

std::pair<std::size_t, std::size_t> SynthSpec::grid() const {
  if (arousal_bins) return {arousal_bins, valence_bins};
  std::size_t a = 1;
  for (std::size_t d = 1; d * d <= classes; ++d) {
    if (classes % d == 0) a = d;
  }
  return {a, classes / a};
}

SynthSpec SynthSpec::parse(std::string_view text) {
  SynthSpec s;
  const auto set_task = [&s](std::string_view task) {
    if (task == "dimensional" || task == "av") {
      s.task = Task::kDimensional;
      return;
    }
    if (task.starts_with("categorical:")) task.remove_prefix(12);
    std::size_t k = 0;
    const auto [ptr, ec] = std::from_chars(task.data(), task.data() + task.size(), k);
    if (ec != std::errc{} || ptr != task.data() + task.size()) {
      throw ParameterError("synth: unknown task '" + std::string(task) + "'");
    }
    s.task = Task::kCategorical;
    s.classes = k;
  };
  const auto to_size = [](std::string_view v, std::string_view key) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw ParameterError("synth: '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
    }
    return out;
  };

  const auto first = text.find_first_not_of(" \t\n");
  if (first != std::string_view::npos && text[first] == '{') {
    try {
      const auto j = nlohmann::json::parse(text);
      s.n_samples = j.value("n_samples", s.n_samples);
      if (j.contains("task")) set_task(j.at("task").get<std::string>());
      s.image_size = j.value("image_size", s.image_size);
      s.noise_level = j.value("noise_level", s.noise_level);
      s.seed = j.value("seed", s.seed);
      s.arousal_bins = j.value("arousal_bins", s.arousal_bins);
      s.valence_bins = j.value("valence_bins", s.valence_bins);
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError(std::string("synth: invalid JSON spec: ") + e.what());
    }
  } else {
    std::size_t start = 0;
    while (start <= text.size()) {
      auto end = text.find(',', start);
      if (end == std::string_view::npos) end = text.size();
      const auto item = text.substr(start, end - start);
      start = end + 1;
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) throw ParameterError("synth: expected key=value, got '" + std::string(item) + "'");
      const auto key = item.substr(0, eq), value = item.substr(eq + 1);
      if (key == "n") {
        s.n_samples = to_size(value, key);
      } else if (key == "task") {
        set_task(value);
      } else if (key == "size") {
        s.image_size = to_size(value, key);
      } else if (key == "noise") {
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), s.noise_level);
        if (ec != std::errc{} || ptr != value.data() + value.size()) throw ParameterError("synth: bad noise value");
      } else if (key == "seed") {
        s.seed = to_size(value, key);
      } else if (key == "grid") {
        const auto x = value.find('x');
        if (x == std::string_view::npos) throw ParameterError("synth: grid must look like AxV");
        s.arousal_bins = to_size(value.substr(0, x), key);
        s.valence_bins = to_size(value.substr(x + 1), key);
      } else {
        throw ParameterError("synth: unknown key '" + std::string(key) + "'");
      }
    }
  }
  s.validate();
  return s;
}

FaceRegions face_regions(const FaceParams& face, std::size_t size) {
  const double dx = face.offset_x, dy = face.offset_y;
  const double eye_ry = kEyeRyMin + kEyeRyRange;  // region covers the widest eye
  const auto eye_box = [&](double cx) {
    return to_box(cx + dx - kEyeRx - kRegionPad, kEyeY + dy - eye_ry - kRegionPad, cx + dx + kEyeRx + kRegionPad,
                  kEyeY + dy + eye_ry + kRegionPad, size);
  };
  const double bend = kMouthBend / 2 + kMouthThickness + kRegionPad;
  return {eye_box(kLeftEyeX), eye_box(kRightEyeX),
          to_box(0.5 + dx - kMouthHalfWidth - kRegionPad, kMouthY + dy - bend, 0.5 + dx + kMouthHalfWidth + kRegionPad,
                 kMouthY + dy + bend, size)};
}

Tensor<float> render_face(const FaceParams& face, std::size_t size, double noise_level, Rng& rng) {
  Tensor<float> img({1, size, size});
  const double s = static_cast<double>(size);
  const double dx = face.offset_x, dy = face.offset_y;
  const double eye_ry = kEyeRyMin + kEyeRyRange * face.eye_openness;
  const auto inside = [](double u, double v, double cx, double cy, double rx, double ry) {
    const double a = (u - cx) / rx, b = (v - cy) / ry;
    return a * a + b * b <= 1.0;
  };
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / s;
      const double v = (static_cast<double>(y) + 0.5) / s;
      double value = kBackground;
      if (inside(u, v, kHeadCx + dx, kHeadCy + dy, kHeadRx, kHeadRy)) value = kSkin;
      if (inside(u, v, kLeftEyeX + dx, kEyeY + dy, kEyeRx, eye_ry) ||
          inside(u, v, kRightEyeX + dx, kEyeY + dy, kEyeRx, eye_ry)) {
        value = kFeature;
      }
      // Parabolic mouth: corners rise for positive curvature.
      const double t = (u - 0.5 - dx) / kMouthHalfWidth;
      if (std::abs(t) <= 1.0) {
        const double centre = kMouthY + dy - face.mouth_curvature * kMouthBend * (t * t - 0.5);
        if (std::abs(v - centre) <= kMouthThickness) value = kFeature;
      }
      if (noise_level > 0.0) value += noise_level * rng.uniform(-1.0, 1.0);
      img[y * size + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return img;
}

std::vector<FaceParams> synth_sample_params(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto [abins, vbins] = spec.grid();
  std::vector<FaceParams> faces(spec.n_samples);
  for (auto& f : faces) {
    if (spec.task == SynthSpec::Task::kCategorical) {
      // Sample a cell, then a point away from the cell borders.
      const auto cell = rng.uniform_index(spec.classes);
      const auto ia = static_cast<double>(cell / vbins), iv = static_cast<double>(cell % vbins);
      const double wa = 1.0 / static_cast<double>(abins), wv = 2.0 / static_cast<double>(vbins);
      f.eye_openness = (ia + rng.uniform(kCellMargin, 1.0 - kCellMargin)) * wa;
      f.mouth_curvature = -1.0 + (iv + rng.uniform(kCellMargin, 1.0 - kCellMargin)) * wv;
    } else {
      f.eye_openness = rng.uniform();
      f.mouth_curvature = rng.uniform(-1.0, 1.0);
    }
    f.offset_x = rng.uniform(-kMaxJitter, kMaxJitter);
    f.offset_y = rng.uniform(-kMaxJitter, kMaxJitter);
  }
  return faces;
}

Target synth_label(const FaceParams& face, const SynthSpec& spec) {
  if (spec.task == SynthSpec::Task::kDimensional) {
    return Target::dimensional(2.0 * face.eye_openness - 1.0, face.mouth_curvature);
  }
  const auto [abins, vbins] = spec.grid();
  const auto bin = [](double unit, std::size_t bins) {
    return std::min(static_cast<std::size_t>(std::floor(unit * static_cast<double>(bins))), bins - 1);
  };
  const std::size_t ia = bin(face.eye_openness, abins);
  const std::size_t iv = bin((face.mouth_curvature + 1.0) / 2.0, vbins);
  return Target::label(ia * vbins + iv);
}

std::vector<std::string> synth_class_names(const SynthSpec& spec) {
  if (spec.task == SynthSpec::Task::kDimensional) return {};
  const auto [abins, vbins] = spec.grid();
  std::vector<std::string> names;
  for (std::size_t a = 0; a < abins; ++a) {
    for (std::size_t v = 0; v < vbins; ++v) {
      names.push_back("arousal" + std::to_string(a) + "_valence" + std::to_string(v));
    }
  }
  return names;
}

Manifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const auto faces = synth_sample_params(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory '" + out_dir.string() + "'");
  }

  Manifest m;
  m.base_dir = out_dir;
  m.class_names = synth_class_names(spec);
  Rng noise_rng(spec.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  std::ofstream params(out_dir / "faces.csv", std::ios::trunc);
  if (!params) throw IoError("cannot write into '" + out_dir.string() + "'");
  params << "path,eye_openness,mouth_curvature,offset_x,offset_y\n";
  for (std::size_t i = 0; i < faces.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%05zu.pgm", i);
    write_image(render_face(faces[i], spec.image_size, spec.noise_level, noise_rng), out_dir / name);
    m.records.push_back({name, synth_label(faces[i], spec)});
    params << name << ',' << faces[i].eye_openness << ',' << faces[i].mouth_curvature << ','
           << faces[i].offset_x << ',' << faces[i].offset_y << '\n';
  }
  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace facechannel
