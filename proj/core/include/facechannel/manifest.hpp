#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace facechannel {

enum class TargetKind { kLabel, kDistribution, kDimensional };

/// A label (one integer), a label distribution, or an (arousal, valence) pair.
struct Target {
  TargetKind kind = TargetKind::kLabel;
  std::vector<double> values;

  static Target label(std::size_t k) { return {TargetKind::kLabel, {static_cast<double>(k)}}; }
  static Target distribution(std::vector<double> p) { return {TargetKind::kDistribution, std::move(p)}; }
  static Target dimensional(double arousal, double valence) {
    return {TargetKind::kDimensional, {arousal, valence}};
  }

  bool is_categorical() const noexcept { return kind != TargetKind::kDimensional; }
  friend bool operator==(const Target&, const Target&) = default;
};

struct ManifestRecord {
  /// As written in the CSV; relative paths are resolved against the manifest directory.
  std::string path;
  Target target;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// CSV with header `path,kind,values`; kind is label | dist | av, values are
/// `k`, `p0;p1;...` or `arousal;valence`. Class names live in `classes.txt`
/// next to the CSV, one per line.
struct Manifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> class_names;
  std::filesystem::path base_dir;

  bool empty() const noexcept { return records.empty(); }
  std::size_t size() const noexcept { return records.size(); }
  bool is_dimensional() const;
  /// Number of categories (class names, distribution width or max label + 1).
  std::size_t num_classes() const;
  std::filesystem::path resolve(const ManifestRecord& record) const;
};

/// Validates every row; DataError messages name the offending line.
Manifest load_manifest(const std::filesystem::path& csv_path);
/// Writes the CSV and, when class names are present, the classes.txt sidecar.
void save_manifest(const Manifest& manifest, const std::filesystem::path& csv_path);

}  // namespace facechannel
