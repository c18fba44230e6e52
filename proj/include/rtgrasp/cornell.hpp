#pragma once

// Cornell grasp dataset ingestion and cross-validation fold assignment.
//
// Layout handled: any directory tree containing pcdNNNNr.png images with sibling
// pcdNNNNcpos.txt positive-grasp files, plus an object index ("z.txt") whose lines are
//   <image number> <object id> [description...]

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rtgrasp/errors.hpp"
#include "rtgrasp/geometry.hpp"
#include "rtgrasp/image.hpp"
#include "rtgrasp/rng.hpp"

namespace rtgrasp {

struct CornellSample {
  std::string image_id;  // "pcd0100"
  std::filesystem::path image_path;
  int width = 0;
  int height = 0;
  int object_id = 0;
  std::string category;
  std::vector<GraspRectangle> positive_rects;
};

class CategoryMap {
 public:
  std::string fallback = "object";
  std::map<int, std::string> objects;
  // Description keyword -> category, consulted when the id is unmapped.
  std::map<std::string, std::string> keywords;

  std::string category_for(int object_id, std::string_view description = {}) const {
    if (auto it = objects.find(object_id); it != objects.end()) return it->second;
    // A keyword matches a description word it prefixes ("mug" matches "mugs").
    std::string word;
    for (std::size_t i = 0; i <= description.size(); ++i) {
      const char c = i < description.size() ? description[i] : ' ';
      if (std::isalnum(static_cast<unsigned char>(c))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        continue;
      }
      for (const auto& [kw, cat] : keywords) {
        if (!word.empty() && word.rfind(kw, 0) == 0) return cat;
      }
      word.clear();
    }
    return fallback;
  }

  std::set<std::string> categories() const {
    std::set<std::string> out{fallback};
    for (const auto& [_, c] : objects) out.insert(c);
    for (const auto& [_, c] : keywords) out.insert(c);
    return out;
  }

  static CategoryMap from_json(const nlohmann::json& j) {
    CategoryMap m;
    if (!j.is_object()) throw ValidationError("category map: expected a JSON object");
    m.fallback = j.value("fallback", std::string("object"));
    if (m.fallback.empty()) throw ValidationError("category map: empty fallback category");
    if (j.contains("objects")) {
      for (const auto& [key, val] : j.at("objects").items()) {
        int id = 0;
        const auto res = std::from_chars(key.data(), key.data() + key.size(), id);
        if (res.ec != std::errc() || res.ptr != key.data() + key.size()) {
          throw ValidationError("category map: object id '" + key + "' is not an integer");
        }
        const std::string cat = val.get<std::string>();
        if (cat.empty()) throw ValidationError("category map: empty category for object " + key);
        m.objects[id] = cat;
      }
    }
    if (j.contains("keywords")) {
      for (const auto& [key, val] : j.at("keywords").items()) {
        std::string kw = key;
        std::transform(kw.begin(), kw.end(), kw.begin(), [](unsigned char c) { return std::tolower(c); });
        m.keywords[kw] = val.get<std::string>();
      }
    }
    return m;
  }

  static CategoryMap load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open category map " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("category map " + path.string() + ": " + e.what());
    }
  }
};

struct AnnotationParse {
  std::vector<GraspRectangle> rects;
  std::size_t dropped_nonfinite = 0;
  std::size_t dropped_degenerate = 0;

  std::size_t dropped() const { return dropped_nonfinite + dropped_degenerate; }
};

// Cornell quadrilaterals are hand-annotated and only approximately rectangular. A quad that
// already satisfies the rectangle tolerances is kept verbatim; otherwise it is replaced by
// the exact rectangle with the same center, closing axis, mean edge lengths and winding.
// Returns nullopt for zero-length edges or a self-intersecting vertex order.
inline std::optional<GraspRectangle> canonicalize_rectangle(const GraspRectangle& quad) {
  if (!quad.finite() || quad.has_zero_length_edge()) return std::nullopt;
  double sign = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2 e0 = quad.vertices[(i + 1) % 4] - quad.vertices[i];
    const Vec2 e1 = quad.vertices[(i + 2) % 4] - quad.vertices[(i + 1) % 4];
    const double c = cross(e0, e1);
    if (c == 0.0 || (sign != 0.0 && (c > 0) != (sign > 0))) return std::nullopt;
    sign = c;
  }
  if (quad.is_rectangular()) return quad;
  const auto& v = quad.vertices;
  const double w = 0.5 * (norm(v[1] - v[2]) + norm(v[3] - v[0]));
  const double plate = 0.5 * (norm(v[0] - v[1]) + norm(v[2] - v[3]));
  const Vec2 axis = quad.closing_axis();
  if (!(norm(axis) > 0.0)) return std::nullopt;
  const double theta = std::atan2(axis.y, axis.x);
  const Vec2 plate_dir{-std::sin(theta), std::cos(theta)};
  const int plate_sign = dot(v[1] - v[0], plate_dir) >= 0.0 ? 1 : -1;
  return make_rectangle(quad.center(), theta, w, plate, plate_sign);
}

namespace detail {

inline std::string_view next_token(std::string_view line, std::size_t& pos) {
  while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
  const std::size_t b = pos;
  while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
  return line.substr(b, pos - b);
}

inline std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline double parse_coordinate(std::string_view tok, std::size_t line_no) {
  std::string_view body = tok;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), v);
  if (body.empty() || res.ec == std::errc::invalid_argument || res.ptr != body.data() + body.size()) {
    throw FormatError("unparseable coordinate '" + std::string(tok) + "'", line_no);
  }
  if (res.ec == std::errc::result_out_of_range) return std::numeric_limits<double>::infinity();
  return v;
}

}  // namespace detail

// Cornell cpos/cneg format: one "x y" vertex per line, four consecutive lines per rectangle.
// Blank lines are ignored. Rectangles with any non-finite coordinate are dropped and counted.
inline AnnotationParse parse_annotation_file(std::string_view content) {
  AnnotationParse out;
  std::array<Vec2, 4> quad{};
  std::size_t in_quad = 0, line_no = 0, last_line = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
    ++line_no;
    std::size_t p = 0;
    const std::string_view tx = detail::next_token(line, p);
    if (tx.empty()) continue;
    const std::string_view ty = detail::next_token(line, p);
    if (ty.empty()) throw FormatError("expected two coordinates", line_no);
    if (!detail::next_token(line, p).empty()) throw FormatError("expected exactly two coordinates", line_no);
    quad[in_quad++] = Vec2{detail::parse_coordinate(tx, line_no), detail::parse_coordinate(ty, line_no)};
    last_line = line_no;
    if (in_quad == 4) {
      in_quad = 0;
      const GraspRectangle r(quad);
      if (!r.finite()) {
        ++out.dropped_nonfinite;
      } else if (auto canon = canonicalize_rectangle(r)) {
        out.rects.push_back(*canon);
      } else {
        ++out.dropped_degenerate;
      }
    }
  }
  if (in_quad != 0) throw FormatError("vertex count is not a multiple of 4", last_line);
  return out;
}

// Writes rectangles in cpos format with shortest round-trip decimal coordinates.
inline std::string serialize_annotation(std::span<const GraspRectangle> rects) {
  std::string out;
  std::array<char, 64> buf{};
  for (const auto& r : rects) {
    for (Vec2 v : r.vertices) {
      auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v.x);
      out.append(buf.data(), res.ptr);
      out.push_back(' ');
      res = std::to_chars(buf.data(), buf.data() + buf.size(), v.y);
      out.append(buf.data(), res.ptr);
      out.push_back('\n');
    }
  }
  return out;
}

struct ObjectIndexEntry {
  int object_id = 0;
  std::string description;
};

// image number -> object
inline std::map<int, ObjectIndexEntry> parse_object_index(std::string_view content) {
  std::map<int, ObjectIndexEntry> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t p = 0;
    const std::string_view sv(line);
    const std::string_view a = detail::next_token(sv, p);
    if (a.empty() || a.front() == '#') continue;
    const std::string_view b = detail::next_token(sv, p);
    int image = 0, object = 0;
    auto ra = std::from_chars(a.data(), a.data() + a.size(), image);
    auto rb = std::from_chars(b.data(), b.data() + b.size(), object);
    if (b.empty() || ra.ptr != a.data() + a.size() || rb.ptr != b.data() + b.size() || ra.ec != std::errc() ||
        rb.ec != std::errc()) {
      throw FormatError("object index: expected '<image number> <object id> [description]'", line_no);
    }
    std::string desc(detail::trim_view(sv.substr(std::min(p, sv.size()))));
    out[image] = ObjectIndexEntry{object, std::move(desc)};
  }
  return out;
}

struct LoadOptions {
  std::optional<std::filesystem::path> index_path;  // default: every z.txt under the root
  std::size_t max_samples = 0;                      // 0 = all
};

struct LoadResult {
  std::vector<CornellSample> samples;
  std::vector<std::string> warnings;
  std::size_t dropped_rects = 0;
  std::size_t images_seen = 0;
};

namespace detail {

inline std::optional<int> cornell_image_number(const std::string& filename) {
  // pcdNNNNr.png
  if (filename.size() < 10 || filename.rfind("pcd", 0) != 0 || !filename.ends_with("r.png")) return std::nullopt;
  const std::string_view digits(filename.data() + 3, filename.size() - 3 - 5);
  int n = 0;
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) return std::nullopt;
  return n;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline LoadResult load_dataset(const std::filesystem::path& root, const CategoryMap& cmap, const LoadOptions& opt = {}) {
  namespace fs = std::filesystem;
  LoadResult out;
  if (!fs::is_directory(root)) throw IngestError("dataset root is not a directory: " + root.string());

  std::map<std::string, fs::path> images;  // image_id -> path, sorted
  std::vector<fs::path> index_files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (detail::cornell_image_number(name)) {
      images[name.substr(0, name.size() - 5)] = entry.path();
    } else if (!opt.index_path && name == "z.txt") {
      index_files.push_back(entry.path());
    }
  }
  if (opt.index_path) index_files = {*opt.index_path};
  std::sort(index_files.begin(), index_files.end());

  std::map<int, ObjectIndexEntry> index;
  for (const auto& f : index_files) {
    try {
      index.merge(parse_object_index(detail::read_text(f)));
    } catch (const FormatError& e) {
      throw IngestError(f.string() + ": " + e.what());
    }
  }
  if (images.empty()) out.warnings.push_back("no pcd*r.png images found under " + root.string());
  if (index_files.empty() && !images.empty()) {
    out.warnings.push_back("no object index (z.txt); each image is treated as its own object");
  }

  for (const auto& [image_id, path] : images) {
    if (opt.max_samples && out.samples.size() >= opt.max_samples) break;
    ++out.images_seen;
    const fs::path cpos = path.parent_path() / (image_id + "cpos.txt");
    if (!fs::exists(cpos)) {
      out.warnings.push_back(image_id + ": missing annotation " + cpos.filename().string() + ", skipped");
      continue;
    }
    AnnotationParse ann;
    try {
      ann = parse_annotation_file(detail::read_text(cpos));
    } catch (const FormatError& e) {
      out.warnings.push_back(image_id + ": " + e.what() + ", skipped");
      continue;
    }
    out.dropped_rects += ann.dropped();
    if (ann.dropped()) {
      out.warnings.push_back(image_id + ": dropped " + std::to_string(ann.dropped()) + " invalid rectangle(s)");
    }
    if (ann.rects.empty()) {
      out.warnings.push_back(image_id + ": no valid positive rectangles, skipped");
      continue;
    }
    CornellSample s;
    s.image_id = image_id;
    s.image_path = path;
    const ImageSize size = read_png_size(path);
    s.width = size.width;
    s.height = size.height;
    const int number = *detail::cornell_image_number(path.filename().string());
    std::string description;
    if (auto it = index.find(number); it != index.end()) {
      s.object_id = it->second.object_id;
      description = it->second.description;
    } else {
      if (!index_files.empty()) out.warnings.push_back(image_id + ": not in object index, using image number as object id");
      s.object_id = number;
    }
    s.category = cmap.category_for(s.object_id, description);
    s.positive_rects = std::move(ann.rects);
    out.samples.push_back(std::move(s));
  }
  return out;
}

enum class SplitMode { ImageWise, ObjectWise };

inline std::string_view to_string(SplitMode m) { return m == SplitMode::ImageWise ? "image-wise" : "object-wise"; }

inline std::optional<SplitMode> parse_split_mode(std::string_view s) {
  if (s == "image-wise" || s == "iw") return SplitMode::ImageWise;
  if (s == "object-wise" || s == "ow") return SplitMode::ObjectWise;
  return std::nullopt;
}

struct FoldAssignment {
  SplitMode mode = SplitMode::ImageWise;
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;  // image_id -> fold

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (const auto& [_, f] : assignment) ++sizes[static_cast<std::size_t>(f)];
    return sizes;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = std::string(to_string(mode));
    j["k"] = k;
    j["seed"] = seed;
    j["assignment"] = assignment;
    return j;
  }

  static FoldAssignment from_json(const nlohmann::json& j) {
    FoldAssignment f;
    const auto mode = parse_split_mode(j.at("mode").get<std::string>());
    if (!mode) throw ValidationError("fold assignment: unknown mode");
    f.mode = *mode;
    f.k = j.at("k").get<int>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.assignment = j.at("assignment").get<std::map<std::string, int>>();
    return f;
  }
};

// Minimal unit for splitting: an image id with its object id.
struct SplitUnit {
  std::string image_id;
  int object_id = 0;
};

// Seeded shuffle of the split units (images, or distinct objects), then round-robin dealing.
inline FoldAssignment split_folds(std::span<const SplitUnit> units, SplitMode mode, int k, std::uint64_t seed) {
  if (k < 2) throw ContractError("split_folds: k must be at least 2");
  if (units.empty()) throw ContractError("split_folds: no samples");
  FoldAssignment f{mode, k, seed, {}};
  Rng rng(seed);
  if (mode == SplitMode::ImageWise) {
    std::vector<std::string> ids;
    for (const auto& u : units) ids.push_back(u.image_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (static_cast<std::size_t>(k) > ids.size()) throw ContractError("split_folds: more folds than images");
    rng.shuffle(std::span<std::string>(ids));
    for (std::size_t i = 0; i < ids.size(); ++i) f.assignment[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  } else {
    std::vector<int> objects;
    for (const auto& u : units) objects.push_back(u.object_id);
    std::sort(objects.begin(), objects.end());
    objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
    if (static_cast<std::size_t>(k) > objects.size()) throw ContractError("split_folds: more folds than objects");
    rng.shuffle(std::span<int>(objects));
    std::map<int, int> object_fold;
    for (std::size_t i = 0; i < objects.size(); ++i) object_fold[objects[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    for (const auto& u : units) f.assignment[u.image_id] = object_fold.at(u.object_id);
  }
  return f;
}

inline FoldAssignment split_folds(std::span<const CornellSample> samples, SplitMode mode, int k, std::uint64_t seed) {
  std::vector<SplitUnit> units;
  units.reserve(samples.size());
  for (const auto& s : samples) units.push_back({s.image_id, s.object_id});
  return split_folds(units, mode, k, seed);
}

}  // namespace rtgrasp
