#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <string>

#include "closer/data.hpp"
#include "closer/error.hpp"
#include "closer/hyperparam.hpp"
#include "doctest.h"

using namespace closer;

namespace {

std::string message_of(const auto& fn, ErrorCode expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("expected an Error");
  return {};
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> b;
  put32(b, 0x803);
  put32(b, count);
  put32(b, rows);
  put32(b, cols);
  for (std::uint32_t i = 0; i < count * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>(i * 37));
  return b;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t count) {
  std::vector<std::uint8_t> b;
  put32(b, 0x801);
  put32(b, count);
  for (std::uint32_t i = 0; i < count; ++i) b.push_back(static_cast<std::uint8_t>(i % 3));
  return b;
}

Dataset image_classes(std::size_t classes, std::size_t n, std::size_t side, std::uint64_t seed) {
  GaussianClassesSpec spec{.classes = classes, .n_per_class = n, .input_dim = side * side,
                           .center_separation = 3.0, .cluster_std = 0.5, .seed = seed,
                           .image = ImageShape{side, side}};
  return synth_gaussian_classes(spec);
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("synthetic clusters") {
    GaussianClassesSpec spec{.classes = 3, .n_per_class = 7, .input_dim = 4, .center_separation = 2.0,
                             .cluster_std = 0.0, .seed = 5};
    const auto d = synth_gaussian_classes(spec);
    CHECK(d.size() == 21);
    CHECK(d.classes() == std::vector<int>{0, 1, 2});
    for (int c = 0; c < 3; ++c) {
      const auto idx = d.indices_of(c);
      CHECK(idx.size() == 7);
      for (auto i : idx) CHECK(std::vector<double>(d.input(i).begin(), d.input(i).end()) ==
                               std::vector<double>(d.input(idx[0]).begin(), d.input(idx[0]).end()));
      double n2 = 0;
      for (double v : d.input(idx[0])) n2 += v * v;
      CHECK(std::sqrt(n2) == doctest::Approx(2.0).epsilon(1e-12));
    }
    CHECK(synth_gaussian_classes(spec) == d);
    spec.cluster_std = 1.0;
    spec.modes_per_class = 3;
    spec.mode_spread = 1.0;
    CHECK(synth_gaussian_classes(spec) == synth_gaussian_classes(spec));
    CHECK(synth_gaussian_classes(spec).size() == 21);
    spec.classes = 1;
    CHECK_THROWS_AS(synth_gaussian_classes(spec), Error);
  }

  TEST_CASE("train/test split") {
    GaussianClassesSpec spec{.classes = 4, .n_per_class = 10, .input_dim = 3, .center_separation = 2.0,
                             .cluster_std = 1.0, .seed = 1};
    const auto d = synth_gaussian_classes(spec);
    const auto [train, test] = train_test_split(d, 3, 9);
    CHECK(train.size() == 28);
    CHECK(test.size() == 12);
    for (int c = 0; c < 4; ++c) CHECK(test.indices_of(c).size() == 3);
    CHECK(train_test_split(d, 3, 9).second == test);
    CHECK_THROWS_AS(train_test_split(d, 10, 9), Error);
  }

  TEST_CASE("idx parse and round trip") {
    const auto d = parse_idx(idx_images(5, 2, 3), idx_labels(5));
    CHECK(d.size() == 5);
    CHECK(d.dim() == 6);
    REQUIRE(d.image_shape().has_value());
    CHECK(d.image_shape()->rows == 2);
    CHECK(d.input(0)[1] == 37.0 / 255.0);
    CHECK(d.label(4) == 1);

    const auto dir = std::filesystem::temp_directory_path();
    write_idx(d, dir / "closer_t_img.idx", dir / "closer_t_lab.idx");
    CHECK(load_idx(dir / "closer_t_img.idx", dir / "closer_t_lab.idx") == d);
    std::filesystem::remove(dir / "closer_t_img.idx");
    std::filesystem::remove(dir / "closer_t_lab.idx");
  }

  TEST_CASE("idx corruption classes are rejected with offsets") {
    auto bad = idx_images(2, 2, 2);
    bad[3] = 0x04;
    auto msg = message_of([&] { parse_idx(bad, idx_labels(2)); }, ErrorCode::kFormat);
    CHECK(msg.find("bad magic") != std::string::npos);
    CHECK(msg.find("offset 0") != std::string::npos);

    auto bad_labels = idx_labels(2);
    bad_labels[2] = 0x09;
    msg = message_of([&] { parse_idx(idx_images(2, 2, 2), bad_labels); }, ErrorCode::kFormat);
    CHECK(msg.find("labels: bad magic") != std::string::npos);

    auto truncated = idx_images(3, 2, 2);
    truncated.resize(truncated.size() - 2);
    msg = message_of([&] { parse_idx(truncated, idx_labels(3)); }, ErrorCode::kFormat);
    CHECK(msg.find("truncated payload") != std::string::npos);
    CHECK(msg.find("offset 26") != std::string::npos);

    auto header = idx_images(3, 2, 2);
    header.resize(10);
    msg = message_of([&] { parse_idx(header, idx_labels(3)); }, ErrorCode::kFormat);
    CHECK(msg.find("truncated header at byte offset 8") != std::string::npos);

    auto short_labels = idx_labels(3);
    short_labels.pop_back();
    msg = message_of([&] { parse_idx(idx_images(3, 2, 2), short_labels); }, ErrorCode::kFormat);
    CHECK(msg.find("labels: truncated payload") != std::string::npos);

    msg = message_of([&] { parse_idx(idx_images(3, 2, 2), idx_labels(4)); }, ErrorCode::kFormat);
    CHECK(msg.find("differs from label count") != std::string::npos);

    message_of([] { load_idx("/nonexistent/a", "/nonexistent/b"); }, ErrorCode::kIo);
  }

  TEST_CASE("csv round trip") {
    GaussianClassesSpec spec{.classes = 2, .n_per_class = 4, .input_dim = 3, .center_separation = 2.0,
                             .cluster_std = 1.0, .seed = 2};
    const auto d = synth_gaussian_classes(spec);
    const auto path = std::filesystem::temp_directory_path() / "closer_t.csv";
    save_csv(d, path);
    CHECK(load_csv(path) == d);
    std::filesystem::remove(path);
  }

  TEST_CASE("augmentation: identity, flip involution, crop bounds, errors") {
    const ImageShape shape{4, 4};
    std::vector<double> img(16);
    for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i) / 16.0;
    Rng rng(1);
    CHECK(augment(img, shape, AugmentationSpec{}, rng) == img);

    AugmentationSpec flip{.hflip_probability = 1.0};
    const auto once = augment(img, shape, flip, rng);
    CHECK(once != img);
    CHECK(once[0] == img[3]);
    CHECK(augment(once, shape, flip, rng) == img);

    AugmentationSpec crop{.crop = CropSpec{1, 4}};
    for (int i = 0; i < 50; ++i) {
      const auto c = augment(img, shape, crop, rng);
      CHECK(c.size() == 16);
      for (double v : c) CHECK((v == 0.0 || std::find(img.begin(), img.end(), v) != img.end()));
    }
    const std::optional<ImageShape> none;
    CHECK_THROWS_AS(augment(img, none, crop, rng), Error);
    CHECK_THROWS_AS(augment(img, shape, AugmentationSpec{.crop = CropSpec{1, 3}}, rng), Error);
    CHECK_THROWS_AS(AugmentationSpec{.hflip_probability = 1.5}.validate(), Error);
    CHECK_THROWS_AS(AugmentationSpec{.noise_std = -1.0}.validate(), Error);
  }

  TEST_CASE("augmentation: noise bounds, clipping, determinism") {
    const double std = 0.2;
    AugmentationSpec noise{.noise_std = std};
    Rng rng(3);
    std::vector<double> v(32, 5.0);
    const std::optional<ImageShape> none;
    for (int i = 0; i < 300; ++i) {
      const auto out = augment(v, none, noise, rng);
      for (std::size_t k = 0; k < v.size(); ++k) CHECK(std::abs(out[k] - v[k]) <= 6 * std);
    }
    std::vector<double> img(9, 0.99);
    for (int i = 0; i < 50; ++i)
      for (double p : augment(img, ImageShape{3, 3}, noise, rng)) CHECK((p >= 0.0 && p <= 1.0));

    Rng a(augmentation_seed(7, noise, 2, 11)), b(augmentation_seed(7, noise, 2, 11));
    CHECK(augment(v, none, noise, a) == augment(v, none, noise, b));
    CHECK(augmentation_seed(7, noise, 2, 11) != augmentation_seed(7, noise, 2, 12));
  }

  TEST_CASE("property: augmentation preserves labels and dimension") {
    const auto d = image_classes(4, 25, 5, 3);
    AugmentationSpec spec{.crop = CropSpec{2, 5}, .hflip_probability = 0.5, .noise_std = 0.1};
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
      const auto s = d.sample(static_cast<std::size_t>(i) % d.size());
      const auto out = augment(s, d.image_shape(), spec, rng);
      CHECK(out.label == s.label);
      CHECK(out.input.size() == s.input.size());
    }
  }

  TEST_CASE("rotations") {
    std::vector<double> img(9, 0.0);
    img[0 * 3 + 1] = 1.0;  // (r=0, c=1)
    const auto r90 = rotate_image(img, 3, 1);
    CHECK(r90[1 * 3 + 2] == 1.0);  // (c, n−1−r) = (1, 2)

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x(25);
      for (auto& v : x) v = u(rng);
      CHECK(rotate_image(rotate_image(x, 5, 2), 5, 2) == x);
      CHECK(rotate_image(rotate_image(x, 5, 1), 5, 3) == x);
      auto sorted_x = x, sorted_r = rotate_image(x, 5, 1);
      std::sort(sorted_x.begin(), sorted_x.end());
      std::sort(sorted_r.begin(), sorted_r.end());
      CHECK(sorted_x == sorted_r);
    }
  }

  TEST_CASE("rotated class synthesis") {
    const auto d = image_classes(3, 6, 4, 1);
    const auto r = rotate_class_synthesis(d, 1, 180);
    CHECK(r.size() == 6);
    CHECK(r.classes() == std::vector<int>{3});
    const auto idx = d.indices_of(1);
    for (std::size_t i = 0; i < r.size(); ++i)
      CHECK(rotate_image(r.input(i), 4, 2) == std::vector<double>(d.input(idx[i]).begin(), d.input(idx[i]).end()));
    CHECK(rotate_class_synthesis(d, 0, 90, 42).classes() == std::vector<int>{42});
    CHECK_THROWS_AS(rotate_class_synthesis(d, 0, 45), Error);
    CHECK_THROWS_AS(rotate_class_synthesis(d, 0, 90, 2), Error);
    GaussianClassesSpec flat{.classes = 2, .n_per_class = 2, .input_dim = 4, .seed = 1};
    CHECK_THROWS_AS(rotate_class_synthesis(synth_gaussian_classes(flat), 0, 90), Error);
  }

  TEST_CASE("hyperparameter search with rotated fake sessions") {
    const auto d = image_classes(4, 30, 4, 8);
    SearchOptions opt{.encoder_dims = {16, 32, 8}, .validation_per_class = 5, .fake_sessions = 2,
                      .shots = 5, .seed = 3};
    const SearchCandidate trained{LossConfig{}, TrainConfig{.epochs = 30, .batch_size = 16, .lr = 0.05}};
    const SearchCandidate untrained{LossConfig{}, TrainConfig{.epochs = 0}};

    const std::vector<SearchCandidate> single{untrained};
    const auto s = hyperparam_search(d, single, opt);
    CHECK(s.best_index == 0);
    CHECK(s.scores.empty());

    const std::vector<SearchCandidate> both{untrained, trained};
    const auto r = hyperparam_search(d, both, opt);
    REQUIRE(r.scores.size() == 2);
    CHECK(r.scores[1] > r.scores[0]);
    CHECK(r.best_index == 1);
    CHECK(hyperparam_search(d, both, opt).scores == r.scores);

    const std::vector<SearchCandidate> tied{trained, trained};
    CHECK(hyperparam_search(d, tied, opt).best_index == 0);
  }
}
