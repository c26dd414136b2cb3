/* Copyright 2026 The dwnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "dwnet/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "dwnet/checkpoint.hpp"
#include "dwnet/correspondence.hpp"
#include "dwnet/metrics.hpp"
#include "dwnet/synth.hpp"

namespace fs = std::filesystem;

namespace dwnet::pipeline {
namespace {

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(d)) throw ConfigError("config: " + key + "=" + v + " is not a number");
  return d;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: " + key + "=" + v + " is not an integer");
  return i;
}

int parse_count(const std::string& key, const std::string& v, int min) {
  const long long i = parse_int(key, v);
  if (i < min || i > 1'000'000'000) {
    throw ConfigError("config: " + key + "=" + v + " must be >= " + std::to_string(min));
  }
  return static_cast<int>(i);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: " + key + "=" + v + " is not a boolean");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

GeneratorConfig RunConfig::generator() const {
  GeneratorConfig g;
  if (profile == "desk") {
    g = GeneratorConfig::desk();
  } else if (profile == "paper") {
    g = GeneratorConfig::paper();
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  }
  if (dims > 0) {
    if (dims % 4 != 0) throw ConfigError("dims must be a multiple of 4, got " + std::to_string(dims));
    g.image_size = dims;
    g.grid_size = dims / 4;
  }
  g.validate();
  return g;
}

void apply_key_values(RunConfig& c, const io::KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "profile") {
      c.profile = value;
    } else if (key == "seed") {
      const long long s = parse_int(key, value);
      if (s < 0) throw ConfigError("config: seed must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
    } else if (key == "dims") {
      c.dims = parse_count(key, value, 0);
    } else if (key == "lambda") {
      c.lambda = parse_double(key, value);
    } else if (key == "lr") {
      c.lr = parse_double(key, value);
    } else if (key == "adv_weight") {
      c.adv_weight = parse_double(key, value);
    } else if (key == "steps") {
      c.steps = parse_count(key, value, 0);
    } else if (key == "scenes") {
      c.scenes = parse_count(key, value, 1);
    } else if (key == "frames") {
      c.frames = parse_count(key, value, 0);
    } else if (key == "data") {
      c.data = value;
    } else if (key == "out") {
      c.out = value;
    } else if (key == "refiner") {
      c.refiner = value;
    } else if (key == "checkpoint") {
      c.checkpoint = value;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
}

io::KeyValues to_key_values(const GeneratorConfig& g) {
  return {
      {"kind", "generator"},
      {"image_size", std::to_string(g.image_size)},
      {"grid_size", std::to_string(g.grid_size)},
      {"image_channels", std::to_string(g.image_channels)},
      {"n_parts", std::to_string(g.n_parts)},
      {"pose_features", std::to_string(g.pose_features)},
      {"appearance_features", std::to_string(g.appearance_features)},
      {"decoder_width", std::to_string(g.decoder_width)},
      {"decoder_blocks", std::to_string(g.decoder_blocks)},
      {"refiner_width", std::to_string(g.refiner_width)},
      {"refiner_blocks", std::to_string(g.refiner_blocks)},
      {"use_warp", std::to_string(int(g.use_warp))},
      {"use_refiner", std::to_string(int(g.use_refiner))},
      {"use_prev_path", std::to_string(int(g.use_prev_path))},
      {"detach_prev", std::to_string(int(g.detach_prev))},
      {"normalize", std::to_string(int(g.normalize))},
  };
}

GeneratorConfig generator_from_key_values(const io::KeyValues& kv) {
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("checkpoint manifest lacks ") + key);
    return it->second;
  };
  if (get("kind") != "generator") throw ConfigError("checkpoint is a '" + get("kind") + "', not a generator");
  GeneratorConfig g;
  g.image_size = parse_count("image_size", get("image_size"), 1);
  g.grid_size = parse_count("grid_size", get("grid_size"), 1);
  g.image_channels = parse_count("image_channels", get("image_channels"), 1);
  g.n_parts = parse_count("n_parts", get("n_parts"), 1);
  g.pose_features = parse_count("pose_features", get("pose_features"), 1);
  g.appearance_features = parse_count("appearance_features", get("appearance_features"), 1);
  g.decoder_width = parse_count("decoder_width", get("decoder_width"), 1);
  g.decoder_blocks = parse_count("decoder_blocks", get("decoder_blocks"), 0);
  g.refiner_width = parse_count("refiner_width", get("refiner_width"), 1);
  g.refiner_blocks = parse_count("refiner_blocks", get("refiner_blocks"), 0);
  g.use_warp = parse_bool("use_warp", get("use_warp"));
  g.use_refiner = parse_bool("use_refiner", get("use_refiner"));
  g.use_prev_path = parse_bool("use_prev_path", get("use_prev_path"));
  g.detach_prev = parse_bool("detach_prev", get("detach_prev"));
  g.normalize = parse_bool("normalize", get("normalize"));
  g.validate();
  return g;
}

void synthesize_dataset(const RunConfig& config, const fs::path& out) {
  if (config.frames < 2) {
    throw ValidationError("synth: --frames must be >= 2 (a training video needs the source plus 2 driving frames), got " +
                          std::to_string(config.frames));
  }
  const GeneratorConfig g = config.generator();
  synth::SceneOptions opts;
  opts.height = opts.width = g.image_size;
  opts.frames = config.frames;
  // Motion ranges are tuned for 64 pixel frames; scale them with the canvas.
  opts.max_translation *= g.image_size / 64.0;
  for (int s = 0; s < config.scenes; ++s) {
    Rng rng = Rng::stream(config.seed, 1000 + static_cast<std::uint64_t>(s));
    const synth::SyntheticScene scene = synth::make_random_scene(opts, rng.bits());
    const synth::SyntheticSequence seq = synth::generate_synthetic_sequence(scene, config.frames, rng.bits());
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", s);
    const fs::path dir = out / name;
    io::write_sequence(dir, seq.video);
    std::error_code ec;
    fs::create_directories(dir / "truth", ec);
    if (ec) throw IoError(IoError::Kind::kOpen, "cannot create " + (dir / "truth").string());
    for (std::size_t k = 0; k < seq.ground_truth.size(); ++k) {
      const std::string stem = (dir / "truth" / io::frame_stem(static_cast<int>(k) + 1)).string();
      io::write_grid(stem + ".grid.dwt", seq.ground_truth[k]);
      io::write_mask(stem + ".mask.dwt", seq.masks[k], scene.height, scene.width);
    }
  }
}

std::vector<fs::path> dataset_scenes(const fs::path& data) {
  std::error_code ec;
  if (!fs::is_directory(data, ec)) throw IoError(IoError::Kind::kOpen, "dataset directory not found: " + data.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(data)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError(IoError::Kind::kOpen, "no sequences found under " + data.string());
  return out;
}

TrainReport train(const RunConfig& config, const fs::path& out) {
  const GeneratorConfig gc = config.generator();
  std::vector<std::vector<Frame>> videos;
  for (const auto& dir : dataset_scenes(config.data)) {
    io::StoredSequence seq = io::read_sequence(dir);
    if (seq.frames.size() < 3) throw ValidationError(dir.string() + ": training needs at least 3 frames");
    const FeatureMap& img = seq.frames.front().image;
    if (img.channels != gc.image_channels || img.height != gc.image_size || img.width != gc.image_size) {
      throw ConfigError(dir.string() + ": frames are " + img.shape_string() + " but the model expects " +
                        std::to_string(gc.image_size) + "x" + std::to_string(gc.image_size));
    }
    videos.push_back(std::move(seq.frames));
  }

  GeneratorNet<float> net(gc);
  net.init(config.seed);
  TrainerConfig tc;
  tc.lambda = config.lambda;
  tc.adv_weight = config.adv_weight;
  tc.learning_rate = config.lr;
  tc.total_steps = config.steps;
  tc.seed = config.seed;
  Trainer trainer(net, tc);
  Rng rng = Rng::stream(config.seed, 10);

  TrainReport report;
  for (int step = 0; step < config.steps; ++step) {
    const auto v = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(videos.size()) - 1));
    report.losses.push_back(trainer.step(videos[v], rng));
  }

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError(IoError::Kind::kOpen, "cannot create output directory " + out.string());
  std::ofstream csv(out / "losses.csv");
  if (!csv) throw IoError(IoError::Kind::kOpen, "cannot write " + (out / "losses.csv").string());
  csv << "step,d_loss,g_loss,rec_loss,total\n";
  char line[256];
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    const auto& l = report.losses[i];
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.9g\n", i + 1, l.d_loss, l.g_loss, l.rec_loss, l.total);
    csv << line;
  }
  if (!csv) throw IoError(IoError::Kind::kOpen, "failed writing " + (out / "losses.csv").string());

  io::KeyValues meta = to_key_values(gc);
  meta["seed"] = std::to_string(config.seed);
  meta["steps"] = std::to_string(config.steps);
  meta["lambda"] = format_double(config.lambda);
  meta["lr"] = format_double(config.lr);
  const auto params = net.parameters();
  io::write_checkpoint(out / "checkpoint", params, meta);

  const auto refiner_params = net.refiner().parameters();
  const RefinerConfig& rc = net.refiner().config();
  io::write_checkpoint(out / "refiner", refiner_params,
                       {{"kind", "refiner"},
                        {"grid_size", std::to_string(gc.grid_size)},
                        {"image_channels", std::to_string(rc.image_channels)},
                        {"width", std::to_string(rc.width)},
                        {"blocks", std::to_string(rc.blocks)},
                        {"n_parts", std::to_string(rc.n_parts)},
                        {"normalize", rc.normalize ? "1" : "0"}});
  return report;
}

std::unique_ptr<GeneratorNet<float>> load_generator(const fs::path& checkpoint) {
  const io::KeyValues meta = io::read_checkpoint_metadata(checkpoint);
  auto net = std::make_unique<GeneratorNet<float>>(generator_from_key_values(meta));
  const auto params = net->parameters();
  io::read_checkpoint(checkpoint, params);
  return net;
}

int generate(const fs::path& checkpoint, const fs::path& sequence, const fs::path& out, int max_frames) {
  auto net = load_generator(checkpoint);
  const io::StoredSequence seq = io::read_sequence(sequence);
  const Frame& source = seq.frames[seq.source_index];
  std::vector<IuvMap> poses;
  for (int i = 0; i < static_cast<int>(seq.frames.size()); ++i) {
    if (i == seq.source_index) continue;
    if (max_frames > 0 && static_cast<int>(poses.size()) >= max_frames) break;
    poses.push_back(seq.frames[i].iuv);
  }
  if (poses.empty()) throw ValidationError("generate: the sequence has no driving poses");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError(IoError::Kind::kOpen, "cannot create output directory " + out.string());
  rollout_stream(*net, source, poses, [&](std::size_t k, const FeatureMap& frame) {
    io::write_feature_map(out / (io::frame_stem(static_cast<int>(k) + 1) + ".img.dwt"), frame);
  });
  return static_cast<int>(poses.size());
}

namespace {

struct FrameSet {
  std::vector<FeatureMap> images;
  KeypointTrack keypoints;  // empty unless every frame has keypoints
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

FrameSet load_frames(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(IoError::Kind::kOpen, "frame directory not found: " + dir.string());
  fs::path frames_dir = dir;
  std::string skip;
  if (fs::exists(dir / "manifest.txt")) {
    const io::KeyValues kv = io::read_key_values(dir / "manifest.txt");
    const auto it = kv.find("source");
    if (it != kv.end()) skip = io::frame_stem(static_cast<int>(parse_int("source", it->second))) + ".img.dwt";
    frames_dir = dir / "frames";
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames_dir)) {
    const std::string name = e.path().filename().string();
    if (ends_with(name, ".img.dwt") && name != skip) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  FrameSet set;
  bool all_keypoints = true;
  KeypointTrack track;
  for (const auto& f : files) {
    set.images.push_back(io::read_feature_map(f));
    std::string kp = f.string();
    kp.replace(kp.size() - 8, 8, ".kp.dwt");
    if (all_keypoints && fs::exists(kp)) {
      track.push_back(io::read_keypoints(kp));
    } else {
      all_keypoints = false;
    }
  }
  if (set.images.empty()) throw IoError(IoError::Kind::kOpen, "no *.img.dwt frames in " + frames_dir.string());
  if (all_keypoints) set.keypoints = std::move(track);
  return set;
}

Eigen::MatrixXd pooled_embeddings(RandomConvExtractor<float>& extractor, const std::vector<FeatureMap>& images) {
  nn::NoGradGuard no_grad;
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto taps = extractor.extract(images[i]);
    int d = 0;
    for (const auto& t : taps) d += t.channels;
    if (i == 0) out.resize(static_cast<Eigen::Index>(images.size()), d);
    int col = 0;
    for (const auto& t : taps) {
      for (int c = 0; c < t.channels; ++c) {
        double s = 0.0;
        for (float v : t.channel(c)) s += v;
        out(static_cast<Eigen::Index>(i), col++) = s / static_cast<double>(t.plane());
      }
    }
  }
  return out;
}

Eigen::MatrixXd to_eigen(const io::Matrix& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) out(r, c) = m.values[static_cast<std::size_t>(r) * m.cols + c];
  }
  return out;
}

}  // namespace

EvaluationReport evaluate(const fs::path& real, const fs::path& fake, const fs::path& real_embeddings,
                          const fs::path& fake_embeddings) {
  const FrameSet a = load_frames(real);
  const FrameSet b = load_frames(fake);
  if (a.images.size() != b.images.size()) {
    throw ValidationError("evaluate: " + std::to_string(a.images.size()) + " real frames vs " +
                          std::to_string(b.images.size()) + " generated frames");
  }
  RandomConvExtractor<float> extractor(a.images.front().channels);
  EvaluationReport r;
  r.frames = static_cast<int>(a.images.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    if (!a.images[i].same_shape(b.images[i])) throw ValidationError("evaluate: frame shapes differ at frame " + std::to_string(i));
    total += perceptual_distance(extractor, a.images[i], b.images[i]);
  }
  r.perceptual = total / static_cast<double>(a.images.size());
  if (!real_embeddings.empty() || !fake_embeddings.empty()) {
    if (real_embeddings.empty() || fake_embeddings.empty()) {
      throw ConfigError("evaluate: both embedding files are required when one is given");
    }
    r.fid = frechet_distance(to_eigen(io::read_matrix(real_embeddings)), to_eigen(io::read_matrix(fake_embeddings)));
  } else if (a.images.size() >= 2) {
    r.fid = frechet_distance(pooled_embeddings(extractor, a.images), pooled_embeddings(extractor, b.images));
  }
  if (!a.keypoints.empty() && !b.keypoints.empty()) r.akd = akd(b.keypoints, a.keypoints);
  return r;
}

std::string to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["perceptual"] = r.perceptual;
  j["fid"] = r.fid ? nlohmann::ordered_json(*r.fid) : nlohmann::ordered_json(nullptr);
  j["akd"] = r.akd ? nlohmann::ordered_json(*r.akd) : nlohmann::ordered_json(nullptr);
  j["frames"] = r.frames;
  return j.dump(2);
}

WarpOutputs warp_image(const FeatureMap& source_image, const IuvMap& source_iuv, const IuvMap& driving_iuv,
                       const fs::path& refiner_checkpoint) {
  for (const auto* m : {&source_iuv, &driving_iuv}) {
    const IuvReport rep = validate_iuv(*m);
    if (!rep.ok()) throw ValidationError(std::string(m == &source_iuv ? "source" : "driving") + " IUV: " + rep.describe());
  }
  if (source_iuv.height != source_image.height || source_iuv.width != source_image.width) {
    throw ValidationError("warp: source image and source IUV sizes differ");
  }
  const PartIndexUV index = PartIndexUV::build(source_iuv);
  CorrespondenceResult cr = coarse_warp(index, driving_iuv);
  WarpOutputs out;
  out.mask = cr.matched;
  if (refiner_checkpoint.empty()) {
    out.grid = std::move(cr.grid);
  } else {
    const io::KeyValues meta = io::read_checkpoint_metadata(refiner_checkpoint);
    const auto kind = meta.find("kind");
    if (kind == meta.end() || kind->second != "refiner") throw ConfigError("warp: --refiner is not a refiner checkpoint");
    RefinerConfig rc;
    rc.image_channels = parse_count("image_channels", meta.at("image_channels"), 1);
    rc.width = parse_count("width", meta.at("width"), 1);
    rc.blocks = parse_count("blocks", meta.at("blocks"), 0);
    rc.n_parts = parse_count("n_parts", meta.at("n_parts"), 1);
    if (const auto it = meta.find("normalize"); it != meta.end()) rc.normalize = it->second == "1";
    const int g = parse_count("grid_size", meta.at("grid_size"), 1);
    if (g > driving_iuv.height || g > driving_iuv.width) throw ConfigError("warp: refiner grid exceeds the image size");
    RefinerNet<float> net(rc);
    const auto params = net.parameters();
    io::read_checkpoint(refiner_checkpoint, params);
    nn::NoGradGuard no_grad;
    const DownsampledGrid coarse = downsample_grid(cr, g, g);
    const WarpGrid refined = net.refine(source_image, coarse.grid, driving_iuv);
    out.grid = resize_grid(refined, driving_iuv.height, driving_iuv.width);
  }
  out.warped = bilinear_sample(source_image, out.grid);
  return out;
}

}  // namespace dwnet::pipeline
