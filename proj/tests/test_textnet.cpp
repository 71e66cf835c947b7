#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "ttn/error.hpp"
#include "ttn/image.hpp"
#include "ttn/io.hpp"
#include "ttn/synthetic.hpp"
#include "ttn/textnet.hpp"

using namespace ttn;
using namespace ttn::textnet;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ttn_textnet_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Image whose pixel values encode their own (c, y, x) position.
Tensor position_image(std::size_t side) {
  Tensor img({3, side, side});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) img.at({c, y, x}) = static_cast<double>((c * side + y) * side + x);
  return img;
}

lda::LdaModel fixed_model(const std::map<std::string, std::vector<double>>& thetas) {
  lda::LdaModel m;
  m.k = thetas.begin()->second.size();
  m.vocab_size = 2;
  m.hyper = lda::LdaHyperparams::with_defaults(m.k);
  m.phi.assign(m.k * 2, 0.5);
  for (const auto& [id, th] : thetas) m.doc_thetas.emplace(id, TopicDistribution(th));
  return m;
}

std::vector<TrainingPair> planted_pairs(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = i % k;
    std::vector<double> th(k, 0.1 / static_cast<double>(k - 1));
    th[t] = 0.9;
    pairs.push_back({synthetic::planted_image(t, 40, 0.08, derive_seed(seed, i)), TopicDistribution(th),
                     "d" + std::to_string(i), ""});
  }
  return pairs;
}

nn::SgdConfig quick_sgd(std::size_t iters, std::size_t batch = 8) { return {0.01, 0.1, 100000, 0.9, batch, iters}; }

}  // namespace

TEST_CASE("make_pairs pairing rule and skipping") {
  const auto dir = scratch_dir("pairs");
  for (int i = 0; i < 3; ++i) image::write_ppm(dir / ("a" + std::to_string(i) + ".ppm"), Tensor({3, 4, 4}, 0.5));
  io::write_atomic(dir / "broken.ppm", "P6\n4 4\n255\nshort");
  const std::vector<corpus::RawDocument> docs = {
      {"a", "text", {"a0.ppm", "a1.ppm", "a2.ppm"}},
      {"b", "text", {}},
      {"c", "text", {"broken.ppm", "missing.ppm"}},
      {"unknown", "text", {"a0.ppm"}},
  };
  const auto model = fixed_model({{"a", {0.7, 0.3}}, {"b", {0.5, 0.5}}, {"c", {0.2, 0.8}}});
  std::vector<std::string> warnings;
  const auto pairs = make_pairs(docs, model, dir, [&](const std::string& w) { warnings.push_back(w); });
  REQUIRE(pairs.size() == 3);
  for (const auto& p : pairs) {
    CHECK(p.doc_id == "a");
    CHECK(p.target == pairs[0].target);
    CHECK(std::abs(p.target[0] + p.target[1] - 1.0) <= 1e-9);
    for (double v : p.image.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK(warnings.size() >= 3);

  const std::vector<corpus::RawDocument> none = {{"c", "text", {"broken.ppm"}}, {"b", "text", {}}};
  CHECK(code_of([&] { make_pairs(none, model, dir); }) == ErrorCode::NoPairs);
  fs::remove_all(dir);
}

TEST_CASE("pair targets follow image color on planted data") {
  synthetic::PlantedConfig cfg;
  cfg.topics = 2;
  cfg.docs = 60;
  cfg.images_per_doc = 2;
  const auto data = synthetic::make_planted(cfg);
  const auto dir = scratch_dir("color");
  synthetic::write_dataset(data, dir);
  const auto vocab = corpus::build_vocabulary(data.docs, 2, 0.5);
  std::vector<corpus::BowDocument> bows;
  for (const auto& d : data.docs) bows.push_back(corpus::doc_to_bow(d, vocab));
  auto h = lda::LdaHyperparams::with_defaults(2);
  h.alpha = 0.1;
  h.n_iters = 100;
  h.burn_in = 50;
  const auto model = lda::train(bows, vocab, h);
  const auto pairs = make_pairs(data.docs, model, dir / "images");
  REQUIRE(pairs.size() == 120);
  // topic 0 is red, topic 1 green: correlate target[0] with mean(R) - mean(G)
  std::vector<double> a, b;
  for (const auto& p : pairs) {
    double r = 0, g = 0;
    const std::size_t plane = p.image.dim(1) * p.image.dim(2);
    for (std::size_t i = 0; i < plane; ++i) {
      r += p.image[i];
      g += p.image[plane + i];
    }
    a.push_back(p.target[0]);
    b.push_back((r - g) / static_cast<double>(plane));
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::abs(sab / std::sqrt(saa * sbb)) >= 0.8);
  fs::remove_all(dir);
}

TEST_CASE("augment") {
  const auto img = position_image(6);
  SUBCASE("full-size crop without mirroring is the identity") {
    CHECK(augment(img, {6, 0.0, 0}, 5) == img);
  }
  SUBCASE("forced mirror applied twice is the identity") {
    const auto once = augment(img, {6, 1.0, 0}, 5);
    CHECK(once == image::mirror(img));
    CHECK(image::mirror(once) == img);
  }
  SUBCASE("deterministic per seed, every crop position reachable") {
    CHECK(augment(img, {4, 0.5, 0}, 9) == augment(img, {4, 0.5, 0}, 9));
    std::set<std::pair<int, int>> seen;
    int mirrored = 0;
    for (std::uint64_t s = 0; s < 400; ++s) {
      const auto v = augment(img, {4, 0.5, 0}, s);
      // top-left value identifies the crop offset (or the top-right when mirrored)
      const int y = static_cast<int>(v[0]) / 6;
      const int left = static_cast<int>(v[0]) % 6;
      const bool flip = v[1] < v[0];
      mirrored += flip;
      seen.insert({y, flip ? left - 3 : left});
    }
    CHECK(seen.size() == 9);
    CHECK(mirrored > 150);
    CHECK(mirrored < 250);
  }
  SUBCASE("crop larger than image") {
    CHECK(code_of([&] { augment(img, {7, 0.5, 0}, 0); }) == ErrorCode::CropTooLarge);
  }
}

TEST_CASE("training: zero iterations, determinism, resume") {
  const auto pairs = planted_pairs(12, 3, 1);
  const auto spec = nn::tiny_topic_net(3);
  const AugmentConfig aug{32, 0.5, 0};

  const auto zero = train(pairs, spec, quick_sgd(0), aug, 5);
  CHECK(zero.history.empty());
  CHECK(zero.checkpoint.params == nn::init_params(spec, 5));

  std::vector<Checkpoint> saved;
  TrainOptions opts;
  opts.checkpoint_every = 3;
  opts.on_checkpoint = [&](const Checkpoint& c) { saved.push_back(c); };
  const auto full = train(pairs, spec, quick_sgd(8), aug, 5, opts);
  REQUIRE(full.history.size() == 8);
  REQUIRE(saved.size() == 2);
  CHECK(saved[0].iteration == 3);

  const auto again = train(pairs, spec, quick_sgd(8), aug, 5);
  CHECK(again.checkpoint == full.checkpoint);

  const auto reloaded = deserialize(serialize(saved[1]));
  CHECK(reloaded == saved[1]);
  const auto resumed = resume(reloaded, pairs);
  CHECK(resumed.checkpoint == full.checkpoint);
  REQUIRE(resumed.history.size() == 2);
  CHECK(resumed.history[1].loss == full.history[7].loss);

  TrainOptions threaded;
  threaded.threads = 3;
  CHECK(train(pairs, spec, quick_sgd(4), aug, 5, threaded).checkpoint ==
        train(pairs, spec, quick_sgd(4), aug, 5).checkpoint);

  CHECK(code_of([&] { train({}, spec, quick_sgd(1), aug, 5); }) == ErrorCode::NoPairs);
  CHECK(code_of([&] { train(pairs, spec, quick_sgd(1), {28, 0.5, 0}, 5); }) == ErrorCode::ShapeMismatch);
  CHECK(nn::SgdConfig::pretrain().batch_size == 64);
  CHECK(nn::SgdConfig::pretrain().max_iters == 120000);
}

TEST_CASE("checkpoint file") {
  const auto spec = nn::tiny_topic_net(2);
  Checkpoint c{spec, nn::init_params(spec, 1), 17, nn::SgdConfig::pretrain(), {32, 0.5, 3}, 9, "abc", Head::Topics};
  const auto path = fs::temp_directory_path() / "ttn_test.ckpt";
  save(c, path);
  CHECK(load(path) == c);
  fs::remove(path);
  const auto bytes = serialize(c);
  CHECK(code_of([&] { deserialize(bytes.substr(0, bytes.size() / 2)); }) == ErrorCode::CorruptFile);
}

TEST_CASE("test views and topic prediction") {
  const auto img = position_image(40);
  const auto views = test_views(img, 32, 10);
  REQUIRE(views.size() == 10);
  CHECK(views[0] == image::crop(img, 4, 4, 32));
  CHECK(views[1] == image::crop(img, 0, 0, 32));
  CHECK(views[4] == image::crop(img, 8, 8, 32));
  for (int i = 0; i < 5; ++i) CHECK(views[5 + i] == image::mirror(views[i]));
  CHECK(test_views(img, 32, 3).size() == 3);
  CHECK(code_of([&] { test_views(img, 32, 11); }) == ErrorCode::InvalidArgument);
  CHECK(test_views(img, 32, 12, CropMode::TrueRandom, 1).size() == 12);
  CHECK(code_of([&] { test_views(img, 41, 1); }) == ErrorCode::CropTooLarge);

  const auto spec = nn::tiny_topic_net(4);
  Checkpoint zero{spec, nn::init_params(spec, 1), 0, {}, {}, 0, "", Head::Topics};
  for (auto& l : zero.params.layers) l.weight.fill(0.0);
  const auto u = predict_topics(zero, img, 1);
  for (double p : u.probs()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  Checkpoint rnd{spec, nn::init_params(spec, 2), 0, {}, {}, 0, "", Head::Topics};
  for (std::size_t n : {1, 5, 10}) {
    const auto t = predict_topics(rnd, synthetic::planted_image(1, 40, 0.1, n), n);
    double s = 0;
    for (double p : t.probs()) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("feature extraction") {
  const auto pairs = planted_pairs(12, 3, 2);
  const auto spec = nn::tiny_topic_net(3);
  const auto ckpt = train(pairs, spec, quick_sgd(30), {32, 0.5, 0}, 4).checkpoint;
  const auto& img = pairs[0].image;

  const auto logits = extract_features(ckpt, img, "fc8");
  const auto fwd = nn::forward(spec, ckpt.params, image::crop(img, 4, 4, 32).reshaped({1, 3, 32, 32}));
  CHECK(logits == fwd.logits.values());
  CHECK(extract_features(ckpt, img, "logits") == logits);
  CHECK(extract_features(ckpt, img, "pool2").size() == 32 * 8 * 8);
  CHECK(extract_features(ckpt, img, "pool5") == extract_features(ckpt, img, "pool2"));
  CHECK(extract_features(ckpt, img, "fc7").size() == 128);
  CHECK(code_of([&] { extract_features(ckpt, img, "conv9"); }) == ErrorCode::UnknownLayer);
  CHECK(extract_features(ckpt, pairs[1].image, "pool5") != extract_features(ckpt, img, "pool5"));
}

TEST_CASE("fine-tuning") {
  const auto spec = nn::tiny_topic_net(5);
  Checkpoint base{spec, nn::init_params(spec, 3), 100, nn::SgdConfig::pretrain(), {32, 0.5, 0}, 3, "h", Head::Topics};
  const auto ft = nn::SgdConfig::finetune();
  CHECK(ft.base_lr == 1e-4);
  CHECK(ft.lr_step == 30000);
  CHECK(ft.momentum == 0.9);
  CHECK(ft.batch_size == 64);

  const auto data = synthetic::make_stripes(40, 40, 6);
  SUBCASE("zero iterations keeps the trunk and replaces the head") {
    auto cfg = ft;
    cfg.max_iters = 0;
    const auto out = fine_tune(base, data, 2, cfg, {32, 0.5, 0}, 8).checkpoint;
    CHECK(out.spec.output_dim() == 2);
    CHECK(out.head == Head::Classes);
    const std::size_t head = spec.layers.size() - 1;
    for (std::size_t l = 0; l < head; ++l) CHECK(out.params.layers[l] == base.params.layers[l]);
    CHECK(out.params.layers[head].weight.shape() == Shape{2, 128});
    for (double v : out.params.layers[head].bias.values()) CHECK(v == 0.0);
  }
  SUBCASE("two-class stripes reach 95% training accuracy in 1000 iterations") {
    const nn::SgdConfig cfg{0.01, 0.1, 100000, 0.9, 16, 1000};
    TrainOptions opts;
    opts.threads = nn::default_threads();
    const auto out = fine_tune(base, data, 2, cfg, {32, 0.5, 0}, 8, opts).checkpoint;
    std::size_t correct = 0;
    for (const auto& d : data) correct += predict_class(out, d.image) == d.label;
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.95);
  }
}
