#include "facechannel/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>

#include "facechannel/error.hpp"

namespace facechannel {

namespace {

constexpr std::string_view kHeader = "path,kind,values";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_real(std::string_view text, const std::string& where) {
  text = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw DataError(where + ": '" + std::string(text) + "' is not a real number");
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string_view kind_name(TargetKind k) {
  switch (k) {
    case TargetKind::kLabel: return "label";
    case TargetKind::kDistribution: return "dist";
    case TargetKind::kDimensional: return "av";
  }
  return "";
}

}  // namespace

bool Manifest::is_dimensional() const {
  return !records.empty() && records.front().target.kind == TargetKind::kDimensional;
}

std::size_t Manifest::num_classes() const {
  if (is_dimensional()) return 0;
  if (!class_names.empty()) return class_names.size();
  std::size_t k = 0;
  for (const auto& r : records) {
    if (r.target.kind == TargetKind::kDistribution) {
      k = std::max(k, r.target.values.size());
    } else {
      k = std::max(k, static_cast<std::size_t>(r.target.values.front()) + 1);
    }
  }
  return k;
}

std::filesystem::path Manifest::resolve(const ManifestRecord& record) const {
  const std::filesystem::path p(record.path);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest load_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("manifest '" + csv_path.string() + "' cannot be opened");
  Manifest m;
  m.base_dir = csv_path.parent_path();

  const auto classes_path = m.base_dir / "classes.txt";
  if (std::ifstream classes(classes_path); classes) {
    for (std::string line; std::getline(classes, line);) {
      const auto name = trim(line);
      if (!name.empty()) m.class_names.emplace_back(name);
    }
  }

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || trim(line) != kHeader) {
    throw DataError(csv_path.string() + ":1: header must be '" + std::string(kHeader) + "'");
  }
  std::size_t dist_width = 0;
  std::optional<bool> dimensional;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    const auto fields = split(row, ',');
    if (fields.size() != 3) throw DataError(where + ": expected 3 comma-separated fields");
    ManifestRecord rec;
    rec.path = std::string(trim(fields[0]));
    if (rec.path.empty()) throw DataError(where + ": empty path");
    const auto kind = trim(fields[1]);
    const auto values = split(trim(fields[2]), ';');

    if (kind == "label") {
      if (values.size() != 1) throw DataError(where + ": label rows take one integer");
      const auto text = trim(values[0]);
      std::size_t k = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError(where + ": '" + std::string(text) + "' is not a class index");
      }
      if (!m.class_names.empty() && k >= m.class_names.size()) {
        throw DataError(where + ": label " + std::to_string(k) + " has no entry in classes.txt");
      }
      rec.target = Target::label(k);
    } else if (kind == "dist") {
      std::vector<double> p;
      double sum = 0.0;
      for (auto v : values) {
        p.push_back(parse_real(v, where));
        if (p.back() < 0.0) throw DataError(where + ": distribution entries must be non-negative");
        sum += p.back();
      }
      if (p.size() < 2) throw DataError(where + ": a distribution needs at least two entries");
      if (std::abs(sum - 1.0) > 1e-5) {
        throw DataError(where + ": distribution sums to " + format_real(sum) + ", expected 1");
      }
      if (dist_width && p.size() != dist_width) throw DataError(where + ": distribution width changes between rows");
      if (!m.class_names.empty() && p.size() != m.class_names.size()) {
        throw DataError(where + ": distribution width differs from classes.txt");
      }
      dist_width = p.size();
      rec.target = Target::distribution(std::move(p));
    } else if (kind == "av") {
      if (values.size() != 2) throw DataError(where + ": av rows take 'arousal;valence'");
      const double a = parse_real(values[0], where), v = parse_real(values[1], where);
      if (std::abs(a) > 1.0 || std::abs(v) > 1.0) throw DataError(where + ": arousal/valence outside [-1,1]");
      rec.target = Target::dimensional(a, v);
    } else {
      throw DataError(where + ": unknown kind '" + std::string(kind) + "'");
    }

    const bool is_dim = rec.target.kind == TargetKind::kDimensional;
    if (dimensional && *dimensional != is_dim) {
      throw DataError(where + ": categorical and dimensional rows cannot be mixed");
    }
    dimensional = is_dim;
    if (!std::filesystem::exists(m.resolve(rec))) {
      throw DataError(where + ": image '" + rec.path + "' does not exist");
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + csv_path.string() + "'");
  out << kHeader << '\n';
  for (const auto& r : manifest.records) {
    out << r.path << ',' << kind_name(r.target.kind) << ',';
    if (r.target.kind == TargetKind::kLabel) {
      out << static_cast<std::size_t>(r.target.values.front());
    } else {
      for (std::size_t i = 0; i < r.target.values.size(); ++i) {
        if (i) out << ';';
        out << format_real(r.target.values[i]);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing manifest '" + csv_path.string() + "'");
  if (!manifest.class_names.empty()) {
    std::ofstream classes(csv_path.parent_path() / "classes.txt", std::ios::trunc);
    if (!classes) throw IoError("cannot write classes.txt next to '" + csv_path.string() + "'");
    for (const auto& name : manifest.class_names) classes << name << '\n';
  }
}

}  // namespace facechannel
