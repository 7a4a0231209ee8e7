#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinface/caae/trainer.hpp"
#include "kinface/cli/config.hpp"
#include "kinface/cli/manifest.hpp"
#include "kinface/data/checkpoint.hpp"
#include "kinface/data/datasets.hpp"
#include "kinface/data/image_io.hpp"
#include "kinface/data/synthetic_world.hpp"
#include "kinface/dnanet/trainer.hpp"
#include "kinface/eval/projection.hpp"
#include "kinface/eval/shape.hpp"
#include "kinface/eval/verification.hpp"

namespace kinface::cli {

using nlohmann::json;

/// Shortest round-trip decimal form, so reports are stable byte for byte.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void require(const std::string& value, const char* field) {
  if (value.empty()) throw ConfigError(std::string("config field '") + field + "': required for this command");
}

inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) { return SeededRng(seed).fork(stream).seed(); }

inline void log_line(const std::string& s) { std::cerr << s << std::endl; }

// ---------------------------------------------------------------------------
// Model loading shared by the commands

struct LoadedModels {
  caae::CaaeModel<float> caae;
  dnanet::DnaNetModel<float> dnanet;
};

inline caae::CaaeModel<float> load_caae(const RunConfig& cfg) {
  caae::CaaeModel<float> model(cfg.caae_config(), 0);
  auto params = model.all_params();
  data::load_checkpoint_into(cfg.caae_checkpoint, params);
  return model;
}

inline dnanet::DnaNetModel<float> load_dnanet(const RunConfig& cfg) {
  dnanet::DnaNetModel<float> model(cfg.dnanet_config(), 0);
  auto params = model.all_params();
  data::load_checkpoint_into(cfg.dnanet_checkpoint, params);
  return model;
}

inline Tensor<float> load_image_batch(const std::vector<fs::path>& paths, std::size_t side) {
  std::vector<caae::FaceImage<float>> faces;
  faces.reserve(paths.size());
  for (const auto& p : paths) faces.push_back(data::load_image(p, side));
  return caae::image_batch<float>(faces);
}

inline Tensor<float> row(const Tensor<float>& t, std::size_t i) {
  const std::size_t d = t.dim(1);
  return Tensor<float>({d}, std::vector<float>(t.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                                               t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
}

inline Tensor<float> stack_rows(const std::vector<Tensor<float>>& rows) {
  const std::size_t d = rows.front().size();
  Tensor<float> out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].data().begin(), rows[i].data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  return out;
}

/// Decodes one feature vector under one label into an image.
inline caae::FaceImage<float> decode_one(const caae::CaaeModel<float>& model, const Tensor<float>& h,
                                         const caae::ConditionLabel& label) {
  NoGradGuard guard;
  auto hv = Var<float>::constant(h.reshaped({1, h.size()}));
  const std::vector<caae::ConditionLabel> labels{label};
  auto img = model.decode(hv, Var<float>::constant(caae::label_batch<float>(labels)));
  return caae::image_from_batch(img.value(), 0);
}

// ---------------------------------------------------------------------------
// synth-data

inline std::string bits_string(const dnanet::SelectionMask& m) {
  std::string s;
  for (auto b : m.bits) s += b ? '1' : '0';
  return s;
}

inline int cmd_synth_data(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.output_dir, "output_dir");
  if (cfg.train_families + cfg.test_families == 0) throw ConfigError("config field 'train_families': need at least one family");
  auto run = open_run("synth-data", cfg);
  const fs::path dir = run.dir();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "faces");

  data::SyntheticWorld world(cfg.world_config());
  SeededRng rng(cfg.sampling_seed);
  const auto set = data::synth_family_set(world, cfg.train_families, cfg.test_families, rng);

  std::vector<std::pair<std::string, const data::SyntheticFamily*>> all;
  for (std::size_t i = 0; i < set.train.size(); ++i) all.emplace_back(set.train_ids[i], &set.train[i]);
  for (std::size_t i = 0; i < set.test.size(); ++i) all.emplace_back(set.test_ids[i], &set.test[i]);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::ostringstream csv, genes;
  csv << "family_id,father,mother,child,child_age,child_gender\n";
  genes << "family_id,role";
  for (std::size_t j = 0; j < world.gene_dim(); ++j) genes << ",g" << j;
  genes << ",mask\n";
  for (const auto& [id, fam] : all) {
    const std::pair<const char*, const data::SyntheticPerson*> members[] = {
        {"father", &fam->father}, {"mother", &fam->mother}, {"child", &fam->child}};
    for (const auto& [role, person] : members) {
      const fs::path rel = fs::path("images") / (id + "_" + role + ".png");
      data::save_png(person->image, dir / rel);
      run.add_artifact(dir / rel);
      if (!data::is_test_family(id)) {
        const fs::path face = dir / "faces" /
                              (std::to_string(person->age_years) + "_" + std::to_string(person->gender) + "_0_" + id +
                               "_" + role + ".png");
        data::save_png(person->image, face);
        run.add_artifact(face);
      }
      genes << id << ',' << role;
      for (double g : person->genes.data()) genes << ',' << fmt(g);
      genes << ',' << (std::string(role) == "child" ? bits_string(fam->mask) : "") << '\n';
    }
    csv << id << ",images/" << id << "_father.png,images/" << id << "_mother.png,images/" << id << "_child.png,"
        << fam->child.age_years << ',' << fam->child.gender << '\n';
  }
  write_text_file(dir / "triplets.csv", csv.str());
  write_text_file(dir / "genes.csv", genes.str());
  run.add_artifact(dir / "triplets.csv");
  run.add_artifact(dir / "genes.csv");
  run.set("families", {{"train", set.train.size()}, {"test", set.test.size()}});
  run.write();
  log_line("synth-data: wrote " + std::to_string(all.size()) + " families to " + dir.string());
  return 0;
}

// ---------------------------------------------------------------------------
// train-caae

inline json caae_row(std::size_t epoch, const caae::CaaeLossReport& r) {
  return {{"epoch", epoch},          {"reconstruction", r.reconstruction}, {"dz_prior", r.dz_prior},
          {"dz_encoded", r.dz_encoded}, {"dimg_real", r.dimg_real},         {"dimg_generated", r.dimg_generated}};
}

inline int cmd_train_caae(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.faces_dir, "faces_dir");
  require(cfg.output_dir, "output_dir");
  if (cfg.caae_epochs == 0) throw ConfigError("config field 'caae_epochs': must be positive");

  auto records = data::scan_labeled_directory(cfg.faces_dir);
  if (cfg.max_images > 0 && records.size() > cfg.max_images) {
    SeededRng pick(derived_seed(cfg.sampling_seed, 1));
    pick.shuffle(std::span<data::LabeledFaceRecord>(records));
    records.resize(cfg.max_images);
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.image_path < b.image_path; });
  }
  if (records.size() < 2) throw std::runtime_error("dataset empty: need at least 2 labelled faces in " + cfg.faces_dir);
  const auto ds = data::load_face_dataset(records, cfg.image_side);

  auto run = open_run("train-caae", cfg);
  const fs::path ckpt = run.dir() / "caae.ksnc";
  caae::CaaeModel<float> model(cfg.caae_config(), cfg.training_seed);
  caae::CaaeTrainer<float> trainer(model, cfg.caae_train_config(), derived_seed(cfg.training_seed, 1));

  caae::CaaeLossReport baseline;
  baseline.reconstruction = caae::mean_reconstruction_loss(model, ds);
  run.add_loss_row(caae_row(0, baseline));
  log_line("train-caae: " + std::to_string(ds.size()) + " images, epoch 0 reconstruction " + fmt(baseline.reconstruction));
  for (std::size_t e = 1; e <= cfg.caae_epochs; ++e) {
    const auto rep = trainer.train_epoch(ds, cfg.batch_size);
    if (!rep.finite()) throw std::runtime_error("non-finite loss in CAAE epoch " + std::to_string(e));
    data::save_checkpoint(model.all_params(), ckpt);
    run.add_loss_row(caae_row(e, rep));
    log_line("train-caae: epoch " + std::to_string(e) + " reconstruction " + fmt(rep.reconstruction));
  }
  run.add_artifact(ckpt);
  run.set("images", ds.size());
  run.write();
  return 0;
}

// ---------------------------------------------------------------------------
// train-dnanet

inline dnanet::TripletFeatures<float> encode_triplets(const caae::CaaeModel<float>& model,
                                                      const std::vector<data::TripletRecord>& recs, std::size_t side) {
  std::vector<fs::path> f, m, c;
  for (const auto& r : recs) {
    f.push_back(r.father_path);
    m.push_back(r.mother_path);
    c.push_back(r.child_path);
  }
  return {caae::encode_all(model, load_image_batch(f, side)), caae::encode_all(model, load_image_batch(m, side)),
          caae::encode_all(model, load_image_batch(c, side))};
}

inline int cmd_train_dnanet(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.caae_checkpoint, "caae_checkpoint");
  require(cfg.triplets, "triplets");
  require(cfg.output_dir, "output_dir");
  if (cfg.dnanet_epochs == 0) throw ConfigError("config field 'dnanet_epochs': must be positive");

  const auto split = data::split_triplets(data::load_triplets(cfg.triplets));
  if (split.train.empty()) throw std::runtime_error("no training triplets in " + cfg.triplets);
  const std::string caae_hash = git_blob_hash_file(cfg.caae_checkpoint);
  const auto caae_model = load_caae(cfg);

  auto run = open_run("train-dnanet", cfg);
  run.add_input("caae_checkpoint", cfg.caae_checkpoint);
  run.add_input("triplets", cfg.triplets);

  // Features depend only on the frozen encoder and the images, so they are
  // computed once per encoder and reused.
  const fs::path cache = run.dir() / ("features_" + caae_hash.substr(0, 12) + ".ksnc");
  dnanet::TripletFeatures<float> feats;
  bool reused = false;
  if (fs::exists(cache)) {
    const auto ck = data::load_checkpoint(cache);
    const auto* f = ck.find("father");
    const auto* m = ck.find("mother");
    const auto* c = ck.find("child");
    if (f && m && c && f->shape == Shape{split.train.size(), cfg.feature_dim}) {
      feats = {f->as_tensor<float>(), m->as_tensor<float>(), c->as_tensor<float>()};
      reused = true;
    }
  }
  if (!reused) {
    feats = encode_triplets(caae_model, split.train, cfg.image_side);
    data::Checkpoint ck;
    ck.entries.push_back(data::CheckpointEntry::from("father", feats.father));
    ck.entries.push_back(data::CheckpointEntry::from("mother", feats.mother));
    ck.entries.push_back(data::CheckpointEntry::from("child", feats.child));
    data::write_file_locked(cache, data::encode_checkpoint(ck));
  }
  run.add_artifact(cache);
  log_line("train-dnanet: " + std::to_string(split.train.size()) + " training triplets" + (reused ? " (cached features)" : ""));

  dnanet::DnaNetModel<float> model(cfg.dnanet_config(), cfg.training_seed);
  dnanet::DnaNetTrainer<float> trainer(model, cfg.dnanet_train_config(), derived_seed(cfg.training_seed, 2));
  const fs::path ckpt = run.dir() / "dnanet.ksnc";
  run.add_loss_row({{"epoch", 0}, {"reconstruction", dnanet::mean_reconstruction_loss(model, feats, dnanet::parse_norm(cfg.norm))}});
  for (std::size_t e = 1; e <= cfg.dnanet_epochs; ++e) {
    const auto rep = trainer.train_epoch(feats, cfg.batch_size);
    if (!rep.finite()) throw std::runtime_error("non-finite loss in DNA-Net epoch " + std::to_string(e));
    data::save_checkpoint(model.all_params(), ckpt);
    run.add_loss_row({{"epoch", e},
                      {"reconstruction", rep.reconstruction},
                      {"dh_discriminator", rep.dh_discriminator},
                      {"dh_generator", rep.dh_generator}});
    if (e % 10 == 0 || e == cfg.dnanet_epochs)
      log_line("train-dnanet: epoch " + std::to_string(e) + " reconstruction " + fmt(rep.reconstruction));
  }
  run.add_artifact(ckpt);
  run.set("norm", {{"default", "L2"}, {"configured", cfg.norm}});
  run.set("caae_checkpoint_sha1_after", git_blob_hash_file(cfg.caae_checkpoint));
  run.write();
  return 0;
}

// ---------------------------------------------------------------------------
// generate

inline std::vector<dnanet::SelectionMask> distinct_masks(std::size_t count, std::size_t gene_dim, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<dnanet::SelectionMask> masks;
  std::set<std::vector<std::uint8_t>> seen;
  for (std::size_t tries = 0; masks.size() < count; ++tries) {
    if (tries > 1000 * count) throw std::runtime_error("cannot draw enough distinct selection masks");
    auto m = dnanet::sample_mask(gene_dim, rng);
    if (seen.insert(m.bits).second) masks.push_back(std::move(m));
  }
  return masks;
}

inline int cmd_generate(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.caae_checkpoint, "caae_checkpoint");
  require(cfg.dnanet_checkpoint, "dnanet_checkpoint");
  require(cfg.father_image, "father_image");
  require(cfg.mother_image, "mother_image");
  require(cfg.output_dir, "output_dir");

  const auto caae_model = load_caae(cfg);
  const auto dna_model = load_dnanet(cfg);
  const auto parents = caae::encode_all(caae_model, load_image_batch({cfg.father_image, cfg.mother_image}, cfg.image_side));
  const auto hf = row(parents, 0), hm = row(parents, 1);

  auto run = open_run("generate", cfg);
  for (const auto& [role, p] : {std::pair{"caae_checkpoint", cfg.caae_checkpoint}, {"dnanet_checkpoint", cfg.dnanet_checkpoint},
                                {"father_image", cfg.father_image}, {"mother_image", cfg.mother_image}})
    run.add_input(role, p);

  const std::vector<int> ages = cfg.age_sweep.empty() ? std::vector<int>{cfg.child_age} : cfg.age_sweep;
  const bool use_mask = cfg.selection_mode == "mask";
  std::vector<dnanet::SelectionMask> masks;
  if (use_mask) masks = distinct_masks(cfg.siblings, cfg.gene_dim, cfg.sampling_seed);

  json outputs = json::array();
  const std::size_t variants = use_mask ? masks.size() : 1;
  for (std::size_t s = 0; s < variants; ++s) {
    const auto h = use_mask ? dnanet::child_feature(dna_model, hf, hm, dnanet::SelectionMode::Mask, masks[s])
                            : dnanet::child_feature(dna_model, hf, hm, dnanet::SelectionMode::Max);
    for (int age : ages) {
      const auto label = caae::encode_label(age, cfg.child_gender);
      std::string name = "child_seed" + std::to_string(cfg.sampling_seed) + "_age" + std::to_string(age) + "_group" +
                         std::to_string(label.age_group) + "_g" + std::to_string(cfg.child_gender);
      name += use_mask ? "_mask" + std::to_string(s) : "_max";
      const fs::path out = run.dir() / (name + ".png");
      data::save_png(decode_one(caae_model, h, label), out);
      run.add_artifact(out);
      json entry{{"file", out.filename().string()}, {"age_years", age}, {"age_group", label.age_group},
                 {"gender", cfg.child_gender}, {"mode", cfg.selection_mode}};
      if (use_mask) entry["mask"] = bits_string(masks[s]);
      outputs.push_back(entry);
    }
  }
  write_text_file(run.dir() / "outputs.json", outputs.dump(2) + "\n");
  run.add_artifact(run.dir() / "outputs.json");
  run.write();
  log_line("generate: wrote " + std::to_string(outputs.size()) + " image(s) to " + run.dir().string());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

inline int cmd_evaluate(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.caae_checkpoint, "caae_checkpoint");
  require(cfg.dnanet_checkpoint, "dnanet_checkpoint");
  require(cfg.triplets, "triplets");
  require(cfg.output_dir, "output_dir");

  const auto test = data::split_triplets(data::load_triplets(cfg.triplets)).test;
  if (test.empty()) throw std::runtime_error("empty test set: no held-out families in " + cfg.triplets);
  if (test.size() < 2) throw std::runtime_error("evaluation needs at least 2 held-out families");
  const auto caae_model = load_caae(cfg);
  const auto dna_model = load_dnanet(cfg);

  auto run = open_run("evaluate", cfg);
  for (const auto& [role, p] : {std::pair{"caae_checkpoint", cfg.caae_checkpoint}, {"dnanet_checkpoint", cfg.dnanet_checkpoint},
                                {"triplets", cfg.triplets}})
    run.add_input(role, p);
  fs::create_directories(run.dir() / "generated");

  const auto feats = encode_triplets(caae_model, test, cfg.image_side);
  std::vector<caae::FaceImage<float>> generated;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto h = dnanet::child_feature(dna_model, row(feats.father, i), row(feats.mother, i), dnanet::SelectionMode::Max);
    generated.push_back(decode_one(caae_model, h, caae::encode_label(test[i].child_age_years, test[i].child_gender)));
    const fs::path out = run.dir() / "generated" / (test[i].family_id + ".png");
    data::save_png(generated.back(), out);
    run.add_artifact(out);
  }
  const auto gen = caae::encode_all(caae_model, caae::image_batch<float>(generated));

  SeededRng rng(cfg.sampling_seed);
  const auto neg = eval::random_unrelated(test.size(), rng);
  struct Row {
    const char* name;
    const Tensor<float>* parent;
    const Tensor<float>* child;
  };
  const Row rows[] = {{"father-real", &feats.father, &feats.child},
                      {"mother-real", &feats.mother, &feats.child},
                      {"father-generated", &feats.father, &gen},
                      {"mother-generated", &feats.mother, &gen}};
  json metrics;
  std::ostringstream csv;
  csv << "pair_type,auc,best_accuracy,best_threshold,pairs\n";
  for (const auto& r : rows) {
    const auto pairs = eval::verification_pairs(*r.parent, *r.child, feats.child, neg);
    const auto roc = eval::roc_and_accuracy(pairs);
    metrics["verification"][r.name] = {{"auc", roc.auc}, {"best_accuracy", roc.best_accuracy},
                                       {"best_threshold", roc.best_threshold}, {"pairs", pairs.size()}};
    csv << r.name << ',' << fmt(roc.auc) << ',' << fmt(roc.best_accuracy) << ',' << fmt(roc.best_threshold) << ','
        << pairs.size() << '\n';
    std::ostringstream curve;
    curve << "fpr,tpr,threshold\n";
    for (const auto& p : roc.points) curve << fmt(p.fpr) << ',' << fmt(p.tpr) << ',' << fmt(p.threshold) << '\n';
    const fs::path curve_path = run.dir() / (std::string("roc_") + r.name + ".csv");
    write_text_file(curve_path, curve.str());
    run.add_artifact(curve_path);
  }

  SeededRng report_rng(derived_seed(cfg.sampling_seed, 1));
  const auto sim = eval::embedding_similarity_report(feats.child, gen, report_rng);
  metrics["embedding_similarity"] = {{"real_vs_generated", sim.real_vs_generated},
                                     {"generated_vs_random", sim.generated_vs_random}};
  std::size_t closer = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    closer += eval::cosine_similarity(row(gen, i), row(feats.child, i)) >
              eval::cosine_similarity(row(gen, i), row(feats.child, neg[i]));
  metrics["generated_closer_to_true_child"] = static_cast<double>(closer) / static_cast<double>(test.size());
  metrics["test_families"] = test.size();

  Tensor<float> stacked({2 * test.size(), cfg.feature_dim});
  std::copy(feats.child.data().begin(), feats.child.data().end(), stacked.data().begin());
  std::copy(gen.data().begin(), gen.data().end(), stacked.data().begin() + static_cast<std::ptrdiff_t>(feats.child.size()));
  const auto proj = eval::project_2d(stacked, cfg.sampling_seed);
  std::ostringstream pcsv;
  pcsv << "family_id,kind,x,y\n";
  for (std::size_t i = 0; i < proj.points.size(); ++i)
    pcsv << test[i % test.size()].family_id << ',' << (i < test.size() ? "real" : "generated") << ','
         << fmt(proj.points[i][0]) << ',' << fmt(proj.points[i][1]) << '\n';

  write_text_file(run.dir() / "metrics.json", metrics.dump(2) + "\n");
  write_text_file(run.dir() / "metrics.csv", csv.str());
  write_text_file(run.dir() / "projection.csv", pcsv.str());
  for (const char* f : {"metrics.json", "metrics.csv", "projection.csv"}) run.add_artifact(run.dir() / f);
  run.write();
  log_line("evaluate: " + std::to_string(test.size()) + " test families; father-generated AUC " +
           fmt(metrics["verification"]["father-generated"]["auc"].get<double>()));
  return 0;
}

// ---------------------------------------------------------------------------
// heritmap

struct LandmarkTriplet {
  fs::path father, mother, child;
};

inline std::vector<LandmarkTriplet> landmark_triplets(const RunConfig& cfg) {
  std::vector<LandmarkTriplet> out;
  if (!cfg.landmark_list.empty()) {
    std::ifstream in(cfg.landmark_list);
    if (!in) throw std::runtime_error("cannot open landmark list " + cfg.landmark_list);
    const fs::path base = fs::path(cfg.landmark_list).parent_path();
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "father,mother,child") throw std::runtime_error("landmark list header must be father,mother,child");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto f = data::split(line, ',');
      if (f.size() != 3) throw std::runtime_error("landmark list line " + std::to_string(line_no) + ": expected 3 fields");
      auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
      out.push_back({resolve(f[0]), resolve(f[1]), resolve(f[2])});
    }
  } else {
    out.push_back({cfg.father_landmarks, cfg.mother_landmarks, cfg.child_landmarks});
  }
  if (out.empty()) throw std::runtime_error("no landmark triplets given");
  return out;
}

inline std::set<std::string> region_keys(const eval::LandmarkSet& s) {
  std::set<std::string> keys;
  for (const auto& [k, v] : s.regions) keys.insert(k);
  return keys;
}

inline int cmd_heritmap(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.output_dir, "output_dir");
  if (cfg.landmark_list.empty()) {
    require(cfg.father_landmarks, "father_landmarks");
    require(cfg.mother_landmarks, "mother_landmarks");
    require(cfg.child_landmarks, "child_landmarks");
  }
  const auto triplets = landmark_triplets(cfg);
  std::vector<eval::HeritabilityMap> maps;
  for (const auto& t : triplets) {
    const auto f = eval::load_landmarks(t.father), m = eval::load_landmarks(t.mother), c = eval::load_landmarks(t.child);
    if (region_keys(f) != region_keys(c) || region_keys(m) != region_keys(c))
      throw eval::LandmarkError("region mismatch across " + t.father.string() + ", " + t.mother.string() + ", " +
                                t.child.string());
    maps.push_back(eval::heritability_map(c, f, m));
  }
  const auto mean = eval::mean_map(maps);

  auto run = open_run("heritmap", cfg);
  for (const auto& t : triplets) {
    run.add_input("father_landmarks", t.father);
    run.add_input("mother_landmarks", t.mother);
    run.add_input("child_landmarks", t.child);
  }
  std::ostringstream csv;
  csv << "triplet";
  for (const auto& r : eval::region_names()) csv << ',' << r;
  csv << '\n';
  json j;
  j["triplets"] = json::array();
  auto emit = [&](const std::string& label, const eval::HeritabilityMap& map) {
    csv << label;
    for (const auto& r : eval::region_names()) csv << ',' << fmt(map.at(r));
    csv << '\n';
  };
  for (std::size_t i = 0; i < maps.size(); ++i) {
    emit(std::to_string(i), maps[i]);
    j["triplets"].push_back({{"father", triplets[i].father.string()},
                             {"mother", triplets[i].mother.string()},
                             {"child", triplets[i].child.string()},
                             {"map", maps[i]}});
  }
  emit("mean", mean);
  j["mean"] = mean;
  write_text_file(run.dir() / "heritability.csv", csv.str());
  write_text_file(run.dir() / "heritability.json", j.dump(2) + "\n");
  run.add_artifact(run.dir() / "heritability.csv");
  run.add_artifact(run.dir() / "heritability.json");
  run.write();
  return 0;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth-data", "train-caae", "train-dnanet", "generate", "evaluate", "heritmap"};
  return names;
}

inline int run_command(const std::string& name, const RunConfig& cfg) {
  if (name == "synth-data") return cmd_synth_data(cfg);
  if (name == "train-caae") return cmd_train_caae(cfg);
  if (name == "train-dnanet") return cmd_train_dnanet(cfg);
  if (name == "generate") return cmd_generate(cfg);
  if (name == "evaluate") return cmd_evaluate(cfg);
  if (name == "heritmap") return cmd_heritmap(cfg);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace kinface::cli
