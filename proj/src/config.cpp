#include "kneeloc/config.hpp"

#include <set>

#include "kneeloc/errors.hpp"

namespace kneeloc {
namespace {

struct Writer {
  json& j;

  template <class T>
  void operator()(const char* key, T& value) {
    if constexpr (std::is_same_v<T, LocNetArch>) {
      j[key] = arch_to_json(value);
    } else {
      j[key] = value;
    }
  }
  template <class F>
  void group(const char* key, F&& f) {
    Writer sub{j[key]};
    sub.j = json::object();
    f(sub);
  }
};

struct Reader {
  const json& j;
  std::string path;
  std::set<std::string> seen;

  Reader(const json& j_, std::string path_) : j(j_), path(std::move(path_)) {
    if (!j.is_object()) throw InvalidArgument("config section '" + path + "' must be an object");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    seen.insert(key);
    if (!j.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, LocNetArch>) {
        value = arch_from_json(j[key]);
      } else {
        value = j[key].get<T>();
      }
    } catch (const json::exception& e) {
      throw InvalidArgument("config key '" + path + key + "': " + e.what());
    }
  }
  template <class F>
  void group(const char* key, F&& f) {
    seen.insert(key);
    if (!j.contains(key)) return;
    Reader sub(j[key], path + key + ".");
    f(sub);
    sub.finish();
  }
  void finish() const {
    for (const auto& item : j.items()) {
      if (!seen.count(item.key())) throw InvalidArgument("unknown config key '" + path + item.key() + "'");
    }
  }
};

template <class V>
void visit_adam(V& v, AdamConfig& c) {
  v("step_size", c.step_size);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("epsilon", c.epsilon);
  v("iterations", c.iterations);
}

template <class V>
void visit_train(V& v, TrainConfig& c) {
  v("outer_iterations", c.outer_iterations);
  v("epochs_per_outer", c.epochs_per_outer);
  v("batch", c.batch);
  v("lr_backbone", c.lr_backbone);
  v("lr_head", c.lr_head);
  v("cu_floor", c.cu_floor);
  v("seed", c.seed);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("epsilon", c.epsilon);
  v.group("sharpen", [&](auto& s) { visit_adam(s, c.sharpen); });
}

template <class V>
void visit(V& v, RunConfig& c) {
  v.group("param", [&](auto& s) {
    s("alpha0", c.param.alpha0);
    s("beta0", c.param.beta0);
    s("rot_bound", c.param.rot_bound);
  });
  v.group("split", [&](auto& s) {
    s("down_width", c.split.down_width);
    s("split_candidates", c.split.split_candidates);
    s("candidate_offset", c.split.candidate_offset);
    s("widen_factor", c.split.widen_factor);
    s("aspect", c.split.aspect);
    s("out_height", c.split.out_height);
    s("out_width", c.split.out_width);
    s("max_shift", c.split.max_shift);
    s("max_input_aspect", c.split.max_input_aspect);
  });
  v.group("grid", [&](auto& s) {
    s("scales", c.grid.grid.scales);
    s("overlap_ratio", c.grid.grid.overlap_ratio);
    s("pair_halfwidth", c.grid.grid.pair_halfwidth);
    s("endpoint_nudge", c.grid.grid.endpoint_nudge);
    s("threads", c.grid.threads);
    s.group("per_init", [&](auto& a) { visit_adam(a, c.grid.per_init); });
    s.group("polish", [&](auto& a) { visit_adam(a, c.grid.polish); });
  });
  v.group("baseline", [&](auto& s) {
    s("scales", c.baseline.scales);
    s("candidates_per_scale", c.baseline.candidates_per_scale);
  });
  v.group("train", [&](auto& s) {
    s("enlarge", c.train.enlarge);
    s("coarse_arch", c.train.coarse_arch);
    s("fine_arch", c.train.fine_arch);
    s.group("coarse", [&](auto& t) { visit_train(t, c.train.coarse); });
    s.group("fine", [&](auto& t) { visit_train(t, c.train.fine); });
  });
  v.group("infer", [&](auto& s) {
    s("sharpen", c.infer.sharpen);
    s.group("sharpen_cfg", [&](auto& a) { visit_adam(a, c.infer.sharpen_cfg); });
  });
  v.group("synth", [&](auto& s) {
    s("half_height", c.synth.half_height);
    s("half_width", c.synth.half_width);
    s("contrast_min", c.synth.contrast_min);
    s("contrast_max", c.synth.contrast_max);
    s("brightness", c.synth.brightness);
    s("negate_probability", c.synth.negate_probability);
    s("margin_px", c.synth.margin_px);
    s.group("background", [&](auto& b) {
      b("base", c.synth.background.base);
      b("cosine_amplitude", c.synth.background.cosine_amplitude);
      b("cosine_terms", c.synth.background.cosine_terms);
      b("max_cycles", c.synth.background.max_cycles);
      b("noise_sigma", c.synth.background.noise_sigma);
    });
    s.group("poses", [&](auto& p) {
      p("scale_min", c.synth.poses.scale_min);
      p("scale_max", c.synth.poses.scale_max);
      p("max_rot", c.synth.poses.max_rot);
      p("center_fraction", c.synth.poses.center_fraction);
      p("max_right_offset", c.synth.poses.max_right_offset);
    });
  });
}

}  // namespace

void RunConfig::validate() const {
  ParamConfig p = param;
  p.f = 1.0;
  p.validate();
  split.validate();
  grid.grid.validate();
  grid.per_init.validate();
  grid.polish.validate();
  if (grid.threads < 1) throw InvalidArgument("grid.threads must be >= 1");
  if (baseline.scales.empty() || baseline.candidates_per_scale < 1) {
    throw InvalidArgument("baseline needs at least one scale and one candidate");
  }
  for (double s : baseline.scales) {
    if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("baseline scales must lie in (0, 1]");
  }
  train.coarse.validate();
  train.fine.validate();
  train.coarse_arch.validate();
  train.fine_arch.validate();
  if (!(train.enlarge >= 1.0)) throw InvalidArgument("train.enlarge must be >= 1");
  infer.sharpen_cfg.validate();
  if (synth.half_height < 8 || synth.half_width < 8) throw InvalidArgument("synthetic halves too small");
  if (!(synth.contrast_min > 0.0) || synth.contrast_max < synth.contrast_min) {
    throw InvalidArgument("bad synthetic contrast range");
  }
}

json config_to_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  json j = json::object();
  Writer w{j};
  visit(w, copy);
  return j;
}

RunConfig config_from_json(const json& j, RunConfig base) {
  Reader r(j, "");
  visit(r, base);
  r.finish();
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

}  // namespace kneeloc
