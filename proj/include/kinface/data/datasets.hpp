#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinface/caae/trainer.hpp"
#include "kinface/data/image_io.hpp"

namespace kinface::data {

namespace fs = std::filesystem;

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

struct AgeGender {
  int age_years = 0;
  int gender = 0;
  friend bool operator==(const AgeGender&, const AgeGender&) = default;
};

/**
 * Parses `[age]_[gender]_[race]_[stamp].ext`. Returns nullopt (after
 * reporting to `warn`) for names that do not follow the convention.
 */
inline std::optional<AgeGender> parse_labeled_filename(const std::string& name,
                                                       const WarningSink& warn = warn_to_stderr) {
  const std::string stem = fs::path(name).stem().string();
  const auto fields = split(stem, '_');
  std::optional<int> age, gender;
  if (fields.size() >= 4) {
    age = parse_int(fields[0]);
    gender = parse_int(fields[1]);
  }
  if (!age || !gender || *age < 0 || (*gender != 0 && *gender != 1)) {
    if (warn) warn("skipping '" + name + "': expected [age]_[gender]_[race]_[stamp]");
    return std::nullopt;
  }
  return AgeGender{*age, *gender};
}

struct LabeledFaceRecord {
  fs::path image_path;
  int age_years = 0;
  int gender = 0;
};

/// Image files of a labelled-face directory, sorted by file name.
inline std::vector<LabeledFaceRecord> scan_labeled_directory(const fs::path& dir,
                                                             const WarningSink& warn = warn_to_stderr) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledFaceRecord> records;
  for (const auto& f : files) {
    if (auto ag = parse_labeled_filename(f.filename().string(), warn))
      records.push_back({f, ag->age_years, ag->gender});
  }
  return records;
}

inline caae::FaceDataset<float> load_face_dataset(const std::vector<LabeledFaceRecord>& records, std::size_t side) {
  std::vector<caae::FaceImage<float>> faces;
  std::vector<caae::ConditionLabel> labels;
  for (const auto& r : records) {
    faces.push_back(load_image(r.image_path, side));
    labels.push_back(caae::encode_label(r.age_years, r.gender));
  }
  return caae::FaceDataset<float>::from(faces, labels);
}

// ---------------------------------------------------------------------------
// Family triplets

struct TripletRecord {
  std::string family_id;
  fs::path father_path, mother_path, child_path;
  int child_age_years = 0;
  int child_gender = 0;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

class TripletCsvError : public std::runtime_error {
 public:
  TripletCsvError(const std::string& msg, std::vector<RowError> rows)
      : std::runtime_error(msg), rows_(std::move(rows)) {}
  const std::vector<RowError>& rows() const { return rows_; }

 private:
  std::vector<RowError> rows_;
};

inline const std::vector<std::string>& triplet_columns() {
  static const std::vector<std::string> cols{"family_id", "father", "mother", "child", "child_age", "child_gender"};
  return cols;
}

/// 64-bit FNV-1a; stable across platforms.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Test membership is a pure function of the family id, so a family can
/// never land on both sides. About 20% of ids fall in the test split.
inline bool is_test_family(const std::string& family_id) { return fnv1a64(family_id) % 1000 >= 800; }

/**
 * Reads a triplet CSV. Relative paths resolve against the CSV's directory.
 * Malformed rows are collected and reported together with their line
 * numbers.
 */
inline std::vector<TripletRecord> load_triplets(const fs::path& csv_path, bool check_files = true) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open triplet file " + csv_path.string());
  std::string header;
  if (!std::getline(in, header)) throw TripletCsvError("empty triplet file " + csv_path.string(), {});
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto cols = split(header, ',');
  std::vector<std::string> missing;
  for (const auto& want : triplet_columns())
    if (std::find(cols.begin(), cols.end(), want) == cols.end()) missing.push_back(want);
  if (!missing.empty()) {
    std::string msg = "triplet file missing columns:";
    for (const auto& m : missing) msg += " " + m;
    throw TripletCsvError(msg, {});
  }
  auto index_of = [&](const std::string& c) {
    return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), c) - cols.begin());
  };
  const std::size_t i_fam = index_of("family_id"), i_f = index_of("father"), i_m = index_of("mother"),
                    i_c = index_of("child"), i_age = index_of("child_age"), i_g = index_of("child_gender");
  const fs::path base = csv_path.parent_path();

  std::vector<TripletRecord> records;
  std::vector<RowError> errors;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols.size()) {
      errors.push_back({line_no, "expected " + std::to_string(cols.size()) + " fields, got " + std::to_string(f.size())});
      continue;
    }
    TripletRecord r;
    r.family_id = f[i_fam];
    std::string problem;
    auto resolve = [&](const std::string& rel, const char* role) {
      if (rel.empty()) {
        problem += std::string(" missing ") + role + " path;";
        return fs::path{};
      }
      fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
      if (check_files && !fs::exists(p)) problem += std::string(" ") + role + " file not found: " + p.string() + ";";
      return p;
    };
    if (r.family_id.empty()) problem += " empty family_id;";
    r.father_path = resolve(f[i_f], "father");
    r.mother_path = resolve(f[i_m], "mother");
    r.child_path = resolve(f[i_c], "child");
    const auto age = parse_int(f[i_age]);
    const auto gender = parse_int(f[i_g]);
    if (!age || *age < 0) problem += " invalid child_age;";
    if (!gender || (*gender != 0 && *gender != 1)) problem += " invalid child_gender;";
    if (!problem.empty()) {
      errors.push_back({line_no, problem.substr(1)});
      continue;
    }
    r.child_age_years = *age;
    r.child_gender = *gender;
    records.push_back(std::move(r));
  }
  if (!errors.empty()) {
    std::string msg = "invalid rows in " + csv_path.string() + ":";
    for (const auto& e : errors) msg += "\n  line " + std::to_string(e.line) + ": " + e.message;
    throw TripletCsvError(msg, std::move(errors));
  }
  return records;
}

struct TripletSplit {
  std::vector<TripletRecord> train, test;
};

inline TripletSplit split_triplets(const std::vector<TripletRecord>& records) {
  TripletSplit s;
  for (const auto& r : records) (is_test_family(r.family_id) ? s.test : s.train).push_back(r);
  return s;
}

}  // namespace kinface::data
