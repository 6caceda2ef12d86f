#include "neuroalign/checkpoint.hpp"

#include <fstream>

#include "neuroalign/array_io.hpp"
#include "neuroalign/error.hpp"

namespace neuroalign {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const fs::path& dir, Backbone& backbone, AlignmentHead* head, const json& extra) {
  fs::create_directories(dir / "params");
  json meta;
  meta["format_version"] = 1;
  meta["backbone"] = backbone.spec().to_json();
  if (head) {
    json h = head->config().to_json();
    h["stage_flat_dims"] = head->stage_flat_dims();
    meta["head"] = h;
  } else {
    meta["head"] = nullptr;
  }
  meta["extra"] = extra;
  json names = json::array();
  auto write = [&](const std::string& name, const Tensor& t) {
    write_array(dir / "params" / (name + ".f64"), t, Dtype::float64);
    names.push_back(name);
  };
  for (const auto& p : backbone.parameters()) write(p.name, p.parameter->value);
  for (const auto& b : backbone.buffers()) write(b.name, *b.buffer);
  if (head) {
    for (const auto& p : head->parameters()) write(p.name, p.parameter->value);
  }
  meta["arrays"] = names;
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write checkpoint metadata in " + dir.string());
  out << meta.dump(2) << "\n";
}

namespace {

void load_into(const fs::path& dir, const std::string& name, Tensor& target) {
  Tensor t = read_array(dir / "params" / (name + ".f64"));
  if (t.shape() != target.shape()) {
    throw ValidationError("checkpoint array '" + name + "' has shape " + shape_to_string(t.shape()) +
                          ", expected " + shape_to_string(target.shape()));
  }
  target = std::move(t);
}

}  // namespace

ModelBundle load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IngestionError("missing checkpoint metadata: " + (dir / "model.json").string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  ModelBundle bundle;
  bundle.backbone = Backbone::build(BackboneSpec::from_json(meta.at("backbone")), 0);
  for (auto& p : bundle.backbone.parameters()) load_into(dir, p.name, p.parameter->value);
  for (auto& b : bundle.backbone.buffers()) load_into(dir, b.name, *b.buffer);
  for (auto& p : bundle.backbone.parameters()) p.parameter->grad = Tensor(p.parameter->value.shape());
  if (!meta.at("head").is_null()) {
    const auto cfg = EncoderHeadConfig::from_json(meta["head"]);
    const auto dims = meta["head"].at("stage_flat_dims").get<std::array<std::size_t, kNumStages>>();
    if (dims != bundle.backbone.stage_flat_dims()) {
      throw ValidationError("checkpoint head was built for different stage sizes than its backbone");
    }
    AlignmentHead head = AlignmentHead::build(cfg, dims, 0);
    for (auto& p : head.parameters()) load_into(dir, p.name, p.parameter->value);
    bundle.head = std::move(head);
  }
  bundle.extra = meta.value("extra", json::object());
  return bundle;
}

}  // namespace neuroalign
