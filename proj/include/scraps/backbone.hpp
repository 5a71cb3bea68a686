#pragma once

#include <scraps/train.hpp>

#include <string>
#include <vector>

namespace scraps {

// One transformer backbone without its integrator head.
struct BackboneModel {
  ModelConfig config;
  Vocabulary vocab;
  Backbone<float> backbone;

  Modality modality() const { return backbone.modality; }
};

inline void save_backbone(BackboneModel& bm, const std::string& path) {
  SckpFile file;
  file.header = {{"kind", "backbone"},
                 {"component", modality_name(bm.modality())},
                 {"model", bm.config},
                 {"vocab", bm.vocab.symbols()}};
  bm.backbone.visit(modality_name(bm.modality()), [&](const std::string& name, MatF& m) {
    file.blobs.push_back(to_blob(name, m));
  });
  write_sckp(file, path);
}

inline BackboneModel extract_backbone(const Model& model, Modality which) {
  return {model.config, model.vocab, model.params.backbone(which)};
}

inline void export_backbone(const std::string& checkpoint, const std::string& which, const std::string& path) {
  const Modality m = parse_modality(which);
  auto bm = extract_backbone(load_model(checkpoint), m);
  save_backbone(bm, path);
}

inline BackboneModel load_backbone(const std::string& path) {
  const auto file = read_sckp(path);
  if (file.header.value("kind", "") != "backbone") throw FormatError("'" + path + "' is not a backbone export");
  BackboneModel bm;
  try {
    bm.config = file.header.at("model").get<ModelConfig>();
    bm.vocab = Vocabulary(file.header.at("vocab").get<std::vector<std::string>>());
    const auto m = parse_modality(file.header.at("component").get<std::string>());
    Rng rng(0);
    bm.backbone.init(m, bm.config, rng);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': bad backbone header: " + e.what());
  }
  bm.backbone.visit(modality_name(bm.modality()), [&](const std::string& name, MatF& m) {
    const auto* blob = file.find(name);
    if (!blob) throw FormatError("'" + path + "': missing tensor '" + name + "'");
    from_blob(*blob, m);
  });
  return bm;
}

// Eval-mode per-position outputs, (B * max_len) x d_model with padded rows zero.
inline MatF backbone_outputs(const BackboneModel& bm, const std::vector<PhonemeSequence>& batch) {
  if (bm.modality() != Modality::kPhonetic) throw ConfigError("backbone is acoustic, got phoneme input");
  EncoderCache<float> c;
  return phonetic_backbone_forward(batch, bm.backbone, bm.config, nullptr, c);
}

inline MatF backbone_outputs(const BackboneModel& bm, const std::vector<MelSpectrogram>& batch) {
  if (bm.modality() != Modality::kAcoustic) throw ConfigError("backbone is phonetic, got spectrogram input");
  EncoderCache<float> c;
  return acoustic_backbone_forward(batch, bm.backbone, bm.config, nullptr, c);
}

}  // namespace scraps
