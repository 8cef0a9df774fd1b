#include "kneeloc/serialize.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "kneeloc/errors.hpp"
#include "kneeloc/image_io.hpp"

namespace kneeloc {
namespace {

json window_to_json(const SubWindow& w) { return json::array({w.left, w.top, w.right, w.bottom}); }

SubWindow window_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("sub-window must be [left, top, right, bottom]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json side_to_json(const SideDetection& s) {
  return {{"pose", pose_to_json(s.pose)}, {"loss", s.loss}, {"negated", s.negated}};
}

SideDetection side_from_json(const json& j) {
  return {pose_from_json(j.at("pose")), j.at("loss").get<double>(), j.at("negated").get<bool>()};
}

struct Fnv1a {
  std::uint64_t h = 14695981039346656037ull;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  template <class T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
};

}  // namespace

json pose_to_json(const PoseParams& p) {
  return {{"scale", p.scale}, {"tx", p.tx}, {"ty", p.ty}, {"rot", p.rot}};
}

PoseParams pose_from_json(const json& j) {
  return {j.at("scale").get<double>(), j.at("tx").get<double>(), j.at("ty").get<double>(),
          j.at("rot").get<double>()};
}

json stats_to_json(const DetectionStats& s) {
  return {{"inits", s.inits}, {"evals", s.evals}, {"wall_ms", s.wall_ms}};
}

json detection_to_json(const Detection& d, const std::string& template_hash,
                       const std::optional<std::array<SideBox, 2>>& boxes) {
  json j;
  j["spec_version"] = kSchemaVersion;
  j["method"] = d.method;
  j["template_hash"] = template_hash;
  j["left"] = side_to_json(d.left);
  j["right"] = side_to_json(d.right);
  j["l_reg"] = d.l_reg;
  j["total"] = d.total;
  json jb = json::array();
  if (boxes) {
    for (const SideBox& box : *boxes) {
      json side = json::array();
      for (const PixelPoint& p : box) side.push_back({p.x, p.y});
      jb.push_back(side);
    }
  }
  j["original_frame_boxes"] = jb;
  j["stats"] = stats_to_json(d.stats);
  return j;
}

Detection detection_from_json(const json& j) {
  Detection d;
  d.method = j.at("method").get<std::string>();
  d.left = side_from_json(j.at("left"));
  d.right = side_from_json(j.at("right"));
  d.l_reg = j.at("l_reg").get<double>();
  d.total = j.at("total").get<double>();
  const json& s = j.at("stats");
  d.stats = {s.at("inits").get<std::int64_t>(), s.at("evals").get<std::int64_t>(),
             s.at("wall_ms").get<double>()};
  return d;
}

std::string template_hash(const Template& T) {
  Fnv1a h;
  h.value(T.height());
  h.value(T.width());
  for (float v : T.patch().data()) h.value(std::bit_cast<std::uint32_t>(v));
  for (const SubWindow& w : {T.red(), T.green()}) {
    h.value(w.left);
    h.value(w.top);
    h.value(w.right);
    h.value(w.bottom);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.h));
  return buf;
}

void save_template(const Template& T, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  // The PNG holds [0, 1]; the intensity range restores the original values.
  const double lo = T.patch().min_value(), hi = T.patch().max_value();
  Image unit = T.patch();
  for (float& v : unit.data()) v = static_cast<float>((v - lo) / (hi - lo));
  write_png16(unit, dir / "patch.png");
  json j{{"f", T.f()},
         {"red", window_to_json(T.red())},
         {"green", window_to_json(T.green())},
         {"intensity", {lo, hi}}};
  write_json(j, dir / "template.json");
}

Template load_template(const std::filesystem::path& dir) {
  for (const char* name : {"patch.png", "template.json"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw IoError("template bundle is missing " + (dir / name).string());
    }
  }
  const json j = read_json(dir / "template.json");
  Image patch = read_image(dir / "patch.png");
  if (j.contains("intensity")) {
    const double lo = j["intensity"].at(0).get<double>(), hi = j["intensity"].at(1).get<double>();
    for (float& v : patch.data()) v = static_cast<float>(lo + v * (hi - lo));
  }
  Template T(std::move(patch), window_from_json(j.at("red")), window_from_json(j.at("green")));
  if (j.contains("f") && std::abs(j["f"].get<double>() - T.f()) > 1e-9) {
    throw InvalidArgument("template.json f does not match the patch shape");
  }
  return T;
}

json transform_to_json(const HalfTransform& t) {
  return {{"crop_x0", t.crop_x0},           {"crop_width", t.crop_width},
          {"pad_left", t.pad_left},         {"pad_right", t.pad_right},
          {"pad_top", t.pad_top},           {"pad_bottom", t.pad_bottom},
          {"padded_height", t.padded_height}, {"padded_width", t.padded_width},
          {"shift_x", t.shift_x},           {"shift_y", t.shift_y},
          {"out_height", t.out_height},     {"out_width", t.out_width},
          {"flipped", t.flipped}};
}

HalfTransform transform_from_json(const json& j) {
  HalfTransform t;
  t.crop_x0 = j.at("crop_x0").get<int>();
  t.crop_width = j.at("crop_width").get<int>();
  t.pad_left = j.at("pad_left").get<int>();
  t.pad_right = j.at("pad_right").get<int>();
  t.pad_top = j.at("pad_top").get<int>();
  t.pad_bottom = j.at("pad_bottom").get<int>();
  t.padded_height = j.at("padded_height").get<int>();
  t.padded_width = j.at("padded_width").get<int>();
  t.shift_x = j.at("shift_x").get<int>();
  t.shift_y = j.at("shift_y").get<int>();
  t.out_height = j.at("out_height").get<int>();
  t.out_width = j.at("out_width").get<int>();
  t.flipped = j.at("flipped").get<bool>();
  return t;
}

json truth_to_json(const GroundTruth& g) {
  return {{"left", pose_to_json(g.left)}, {"right", pose_to_json(g.right)}, {"f", g.f}};
}

GroundTruth truth_from_json(const json& j) {
  return {pose_from_json(j.at("left")), pose_from_json(j.at("right")), j.at("f").get<double>()};
}

json arch_to_json(const LocNetArch& a) {
  json conv = json::array();
  for (const ConvLayerSpec& l : a.conv) {
    conv.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  }
  return {{"input_height", a.input_height}, {"input_width", a.input_width},
          {"conv", conv},                   {"pointwise", a.pointwise},
          {"channel_normalize", a.channel_normalize}, {"hidden", a.hidden}};
}

LocNetArch arch_from_json(const json& j) {
  LocNetArch a;
  a.input_height = j.at("input_height").get<int>();
  a.input_width = j.at("input_width").get<int>();
  a.conv.clear();
  for (const json& l : j.at("conv")) {
    a.conv.push_back({l.at("channels").get<int>(), l.at("kernel").get<int>(), l.at("stride").get<int>()});
  }
  a.pointwise = j.at("pointwise").get<std::vector<int>>();
  a.channel_normalize = j.at("channel_normalize").get<bool>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.validate();
  return a;
}

json weights_to_json(const LocNetWeights& w) {
  json tensors = json::array();
  for (const ParamTensor& t : w.tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  }
  return {{"format", kWeightsFormat}, {"version", kWeightsVersion}, {"seed", w.seed()},
          {"arch", arch_to_json(w.arch())}, {"tensors", tensors}};
}

LocNetWeights weights_from_json(const json& j) {
  if (j.value("format", std::string()) != kWeightsFormat) throw InvalidArgument("not a weights file");
  if (j.at("version").get<int>() != kWeightsVersion) throw InvalidArgument("unsupported weights version");
  LocNetWeights w(arch_from_json(j.at("arch")));
  w.set_seed(j.at("seed").get<std::uint64_t>());
  const json& tensors = j.at("tensors");
  auto& ts = w.mutable_tensors();
  if (tensors.size() != ts.size()) throw ShapeMismatch("weights file has the wrong number of tensors");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != ts[i].name || t.at("shape").get<std::vector<int>>() != ts[i].shape) {
      throw ShapeMismatch("tensor " + ts[i].name + " does not match the architecture");
    }
    std::vector<double> values = t.at("values").get<std::vector<double>>();
    if (values.size() != ts[i].values.size()) throw ShapeMismatch("tensor " + ts[i].name + " has the wrong size");
    ts[i].values = std::move(values);
  }
  return w;
}

json model_to_json(const TwoPhaseModel& m) {
  return {{"enlarge", m.enlarge}, {"coarse", weights_to_json(m.coarse)}, {"fine", weights_to_json(m.fine)}};
}

TwoPhaseModel model_from_json(const json& j) {
  return {weights_from_json(j.at("coarse")), weights_from_json(j.at("fine")), j.at("enlarge").get<double>()};
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace kneeloc
