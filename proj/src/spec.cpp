#include "ganinv/spec.hpp"

#include <nlohmann/json.hpp>

namespace ganinv {

using nlohmann::json;

std::string role_name(Role r) {
  switch (r) {
    case Role::Generator: return "generator";
    case Role::Inverter: return "inverter";
    case Role::Discriminator: return "discriminator";
    case Role::Classifier: return "classifier";
  }
  return "?";
}

Role role_from_name(const std::string& s) {
  if (s == "generator") return Role::Generator;
  if (s == "inverter") return Role::Inverter;
  if (s == "discriminator") return Role::Discriminator;
  if (s == "classifier") return Role::Classifier;
  throw SpecError("unknown role: " + s);
}

Shape NetworkSpec::input_shape() const {
  if (role == Role::Generator) return {latent_dim};
  return {image_shape[0], image_shape[1], image_shape[2]};
}

Shape NetworkSpec::output_shape() const {
  Shape cur = input_shape();
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == "dense") {
      cur = {l.out};
    } else if (l.kind == "conv") {
      if (cur.size() != 3) throw SpecError("conv needs [h,w,c] input", int(i));
      const int64_t oh = detail::conv_out_dim(cur[0], l.kernel, l.stride, l.pad);
      const int64_t ow = detail::conv_out_dim(cur[1], l.kernel, l.stride, l.pad);
      if (oh <= 0 || ow <= 0) throw SpecError("conv collapses spatial dims", int(i));
      cur = {oh, ow, l.out_channels};
    } else if (l.kind == "deconv") {
      if (cur.size() != 3) throw SpecError("deconv needs [h,w,c] input", int(i));
      const int64_t oh = detail::deconv_out_dim(cur[0], l.kernel, l.stride, l.pad);
      const int64_t ow = detail::deconv_out_dim(cur[1], l.kernel, l.stride, l.pad);
      if (oh <= 0 || ow <= 0) throw SpecError("deconv collapses spatial dims", int(i));
      cur = {oh, ow, l.out_channels};
    } else if (l.kind == "act" || l.kind == "bnorm") {
      // shape preserved
    } else if (l.kind == "reshape") {
      if (shape_numel(cur) != shape_numel(l.target))
        throw SpecError("reshape element count mismatch at layer " + std::to_string(i), int(i));
      cur = l.target;
    } else if (l.kind == "flatten") {
      cur = {shape_numel(cur)};
    } else {
      throw SpecError("unknown layer kind '" + l.kind + "'", int(i));
    }
  }
  return cur;
}

void NetworkSpec::validate() const {
  if (latent_dim <= 0 && role != Role::Classifier && role != Role::Discriminator)
    throw SpecError("latent_dim must be positive");
  if (layers.empty()) throw SpecError("empty layer ladder");
  const Shape out = output_shape();  // throws on chain mismatch

  const Shape img = {image_shape[0], image_shape[1], image_shape[2]};
  switch (role) {
    case Role::Generator: {
      if (!same_shape(out, img))
        throw SpecError("generator output " + shape_str(out) + " does not match image shape " +
                        shape_str(img));
      const LayerSpec& last = layers.back();
      if (last.kind != "act" || last.fn != "tanh")
        throw SpecError("generator must end with a tanh squashing activation");
      break;
    }
    case Role::Inverter: {
      if (!same_shape(out, Shape{latent_dim}))
        throw SpecError("inverter output " + shape_str(out) + " must be the latent [" +
                        std::to_string(latent_dim) + "]");
      if (layers.back().kind == "act")
        throw SpecError("inverter output must be unbounded (no final activation)");
      break;
    }
    case Role::Discriminator: {
      if (shape_numel(out) != 1) throw SpecError("discriminator must output a single score");
      break;
    }
    case Role::Classifier: {
      if (out.size() != 1 || out[0] < 2)
        throw SpecError("classifier must output at least two logits");
      if (layers.back().kind != "dense")
        throw SpecError("classifier must end with a dense logit layer");
      break;
    }
  }
}

static json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = l.kind;
  if (l.kind == "dense") j["out"] = l.out;
  if (l.kind == "conv" || l.kind == "deconv") {
    j["out_channels"] = l.out_channels;
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    j["pad"] = l.pad;
  }
  if (l.kind == "act") {
    j["fn"] = l.fn;
    if (l.fn == "lrelu") j["alpha"] = l.alpha;
  }
  if (l.kind == "reshape") j["target"] = l.target;
  return j;
}

static LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = j.at("kind").get<std::string>();
  if (l.kind == "dense") l.out = j.at("out").get<int64_t>();
  if (l.kind == "conv" || l.kind == "deconv") {
    l.out_channels = j.at("out_channels").get<int64_t>();
    l.kernel = j.at("kernel").get<int64_t>();
    l.stride = j.at("stride").get<int64_t>();
    l.pad = j.at("pad").get<int64_t>();
  }
  if (l.kind == "act") {
    l.fn = j.at("fn").get<std::string>();
    l.alpha = j.value("alpha", 0.2);
  }
  // bnorm carries no extra fields
  if (l.kind == "reshape") l.target = j.at("target").get<Shape>();
  return l;
}

json NetworkSpec::to_json() const {
  json j;
  j["role"] = role_name(role);
  j["latent_dim"] = latent_dim;
  j["image_shape"] = image_shape;
  j["layers"] = json::array();
  for (const auto& l : layers) j["layers"].push_back(layer_to_json(l));
  return j;
}

NetworkSpec NetworkSpec::from_json(const json& j) {
  NetworkSpec s;
  s.role = role_from_name(j.at("role").get<std::string>());
  s.latent_dim = j.at("latent_dim").get<int64_t>();
  s.image_shape = j.at("image_shape").get<std::array<int64_t, 3>>();
  for (const auto& lj : j.at("layers")) s.layers.push_back(layer_from_json(lj));
  return s;
}

std::string NetworkSpec::canonical_string() const { return to_json().dump(); }

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t spec_hash(const NetworkSpec& spec) { return fnv1a(spec.canonical_string()); }

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

NetworkSpec mirror_inverter_spec(const NetworkSpec& generator) {
  if (generator.role != Role::Generator)
    throw SpecError("mirror_inverter_spec expects a generator spec");
  generator.validate();

  NetworkSpec inv;
  inv.role = Role::Inverter;
  inv.latent_dim = generator.latent_dim;
  inv.image_shape = generator.image_shape;

  // Walk the generator ladder backwards, recording the shape *entering* each
  // layer so the mirrored layer can reproduce it.
  std::vector<Shape> entry_shapes;
  Shape cur = generator.input_shape();
  for (const auto& l : generator.layers) {
    entry_shapes.push_back(cur);
    if (l.kind == "dense") cur = {l.out};
    else if (l.kind == "conv")
      cur = {detail::conv_out_dim(cur[0], l.kernel, l.stride, l.pad),
             detail::conv_out_dim(cur[1], l.kernel, l.stride, l.pad), l.out_channels};
    else if (l.kind == "deconv")
      cur = {detail::deconv_out_dim(cur[0], l.kernel, l.stride, l.pad),
             detail::deconv_out_dim(cur[1], l.kernel, l.stride, l.pad), l.out_channels};
    else if (l.kind == "reshape") cur = l.target;
    else if (l.kind == "flatten") cur = {shape_numel(cur)};
  }

  for (size_t i = generator.layers.size(); i-- > 0;) {
    const LayerSpec& l = generator.layers[i];
    const Shape& entry = entry_shapes[i];
    if (l.kind == "act") {
      if (i + 1 == generator.layers.size()) continue;  // drop the output squash
      LayerSpec a;
      a.kind = "act";
      a.fn = "lrelu";
      a.alpha = 0.2;
      inv.layers.push_back(a);
    } else if (l.kind == "bnorm") {
      LayerSpec b;
      b.kind = "bnorm";
      inv.layers.push_back(b);
    } else if (l.kind == "deconv") {
      LayerSpec c;
      c.kind = "conv";
      c.out_channels = entry[2];
      c.kernel = l.kernel;
      c.stride = l.stride;
      c.pad = l.pad;
      inv.layers.push_back(c);
    } else if (l.kind == "conv") {
      LayerSpec c;
      c.kind = "deconv";
      c.out_channels = entry[2];
      c.kernel = l.kernel;
      c.stride = l.stride;
      c.pad = l.pad;
      inv.layers.push_back(c);
    } else if (l.kind == "dense") {
      LayerSpec d;
      d.kind = "dense";
      d.out = shape_numel(entry);
      inv.layers.push_back(d);
    } else if (l.kind == "reshape") {
      if (entry.size() == 1) {
        LayerSpec f;
        f.kind = "flatten";
        inv.layers.push_back(f);
      } else {
        LayerSpec r;
        r.kind = "reshape";
        r.target = entry;
        inv.layers.push_back(r);
      }
    } else if (l.kind == "flatten") {
      LayerSpec r;
      r.kind = "reshape";
      r.target = entry;
      inv.layers.push_back(r);
    }
  }
  inv.validate();
  return inv;
}

NetworkSpec dcgan_generator_spec(int64_t latent_dim, int64_t h, int64_t w, int64_t c,
                                 int64_t base_channels) {
  if (h % 4 != 0 || w % 4 != 0) throw SpecError("image dims must be divisible by 4");
  NetworkSpec s;
  s.role = Role::Generator;
  s.latent_dim = latent_dim;
  s.image_shape = {h, w, c};
  const int64_t h0 = h / 4, w0 = w / 4;
  s.layers.push_back({.kind = "dense", .out = h0 * w0 * base_channels});
  s.layers.push_back({.kind = "bnorm"});
  s.layers.push_back({.kind = "act", .fn = "relu"});
  s.layers.push_back({.kind = "reshape", .target = {h0, w0, base_channels}});
  s.layers.push_back(
      {.kind = "deconv", .out_channels = base_channels / 2, .kernel = 4, .stride = 2, .pad = 1});
  s.layers.push_back({.kind = "bnorm"});
  s.layers.push_back({.kind = "act", .fn = "relu"});
  s.layers.push_back({.kind = "deconv", .out_channels = c, .kernel = 4, .stride = 2, .pad = 1});
  s.layers.push_back({.kind = "act", .fn = "tanh"});
  return s;
}

NetworkSpec dcgan_discriminator_spec(int64_t h, int64_t w, int64_t c, int64_t base_channels) {
  NetworkSpec s;
  s.role = Role::Discriminator;
  s.latent_dim = 1;
  s.image_shape = {h, w, c};
  s.layers.push_back(
      {.kind = "conv", .out_channels = base_channels / 2, .kernel = 4, .stride = 2, .pad = 1});
  s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  s.layers.push_back(
      {.kind = "conv", .out_channels = base_channels, .kernel = 4, .stride = 2, .pad = 1});
  s.layers.push_back({.kind = "bnorm"});
  s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  s.layers.push_back({.kind = "flatten"});
  s.layers.push_back({.kind = "dense", .out = 1});
  s.layers.push_back({.kind = "act", .fn = "sigmoid"});
  return s;
}

NetworkSpec conv_classifier_spec(int64_t h, int64_t w, int64_t c, int64_t num_classes,
                                 int64_t base_channels, int64_t feature_dim) {
  NetworkSpec s;
  s.role = Role::Classifier;
  s.latent_dim = 1;
  s.image_shape = {h, w, c};
  s.layers.push_back(
      {.kind = "conv", .out_channels = base_channels, .kernel = 4, .stride = 2, .pad = 1});
  s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  s.layers.push_back(
      {.kind = "conv", .out_channels = base_channels * 2, .kernel = 4, .stride = 2, .pad = 1});
  s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  s.layers.push_back({.kind = "flatten"});
  s.layers.push_back({.kind = "dense", .out = feature_dim});
  s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  s.layers.push_back({.kind = "dense", .out = num_classes});
  return s;
}

NetworkSpec mlp_generator_spec(int64_t latent_dim, int64_t data_dim, int64_t hidden,
                               int64_t depth) {
  NetworkSpec s;
  s.role = Role::Generator;
  s.latent_dim = latent_dim;
  s.image_shape = {1, 1, data_dim};
  for (int64_t i = 0; i < depth; ++i) {
    s.layers.push_back({.kind = "dense", .out = hidden});
    s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  }
  s.layers.push_back({.kind = "dense", .out = data_dim});
  s.layers.push_back({.kind = "reshape", .target = {1, 1, data_dim}});
  s.layers.push_back({.kind = "act", .fn = "tanh"});
  return s;
}

NetworkSpec mlp_discriminator_spec(int64_t data_dim, int64_t hidden, int64_t depth) {
  NetworkSpec s;
  s.role = Role::Discriminator;
  s.latent_dim = 1;
  s.image_shape = {1, 1, data_dim};
  s.layers.push_back({.kind = "flatten"});
  for (int64_t i = 0; i < depth; ++i) {
    s.layers.push_back({.kind = "dense", .out = hidden});
    s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  }
  s.layers.push_back({.kind = "dense", .out = 1});
  s.layers.push_back({.kind = "act", .fn = "sigmoid"});
  return s;
}

NetworkSpec mlp_classifier_spec(int64_t data_dim, int64_t num_classes, int64_t hidden) {
  NetworkSpec s;
  s.role = Role::Classifier;
  s.latent_dim = 1;
  s.image_shape = {1, 1, data_dim};
  s.layers.push_back({.kind = "flatten"});
  s.layers.push_back({.kind = "dense", .out = hidden});
  s.layers.push_back({.kind = "act", .fn = "lrelu", .alpha = 0.2});
  s.layers.push_back({.kind = "dense", .out = num_classes});
  return s;
}

}  // namespace ganinv
