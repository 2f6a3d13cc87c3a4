#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "domainmix/model.hpp"
#include "domainmix/rng.hpp"
#include "oracles.hpp"

using namespace domainmix;
using namespace domainmix::model;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("encode basics") {
  SUBCASE("zero weights give zero features") {
    EncoderParams enc;
    enc.w1 = Matrix::zeros(3, 4);
    enc.b1 = Matrix::zeros(1, 4);
    enc.w2 = Matrix::zeros(4, 4);
    enc.b2 = Matrix::zeros(1, 4);
    enc.w3 = Matrix::zeros(4, 2);
    enc.b3 = Matrix::zeros(1, 2);
    Rng rng(3);
    const Matrix f = encode(enc, oracles::random_matrix(5, 3, rng));
    for (const double v : f.data) CHECK(v == 0.0);
  }
  SUBCASE("rows are independent of the rest of the batch") {
    const EncoderParams enc = make_encoder(4, 6, 3, Rng(9));
    Rng rng(10);
    const Matrix batch = oracles::random_matrix(4, 4, rng);
    const Matrix full = encode(enc, batch);
    for (int i = 0; i < batch.rows; ++i) {
      const Matrix single = encode(enc, gather_rows(batch, {i}));
      for (int j = 0; j < full.cols; ++j) {
        CHECK(single(0, j) == full(i, j));
      }
    }
  }
  SUBCASE("encoder gradient matches finite differences") {
    const EncoderParams enc = make_encoder(3, 4, 2, Rng(11));
    Rng rng(12);
    const Matrix x = oracles::random_matrix(3, 3, rng);
    std::map<std::string, Matrix> params = {{"enc.w1", enc.w1}, {"enc.b1", enc.b1}, {"enc.w2", enc.w2},
                                            {"enc.b2", enc.b2}, {"enc.w3", enc.w3}, {"enc.b3", enc.b3}};
    auto loss_fn = [&x](const std::map<std::string, Matrix>& p) {
      EncoderParams e;
      e.w1 = p.at("enc.w1");
      e.b1 = p.at("enc.b1");
      e.w2 = p.at("enc.w2");
      e.b2 = p.at("enc.b2");
      e.w3 = p.at("enc.w3");
      e.b3 = p.at("enc.b3");
      const Matrix f = encode(e, x);
      double s = 0.0;
      for (const double v : f.data) s += v;
      return s;
    };
    GradTape tape;
    const auto f = encode_on_tape(tape, enc, tape.constant(x), /*trainable=*/true);
    tape.backward(tape.sum_all(f));
    const auto report = oracles::finite_difference_check(params, loss_fn, tape.param_grads());
    CHECK(report.max_rel_err < 1e-6);
  }
}

TEST_CASE("normalize_features") {
  const Matrix f = Matrix::from_rows({{3, 4}, {1, 0}, {0, 0}});
  const Matrix n = normalize_features(f);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(n(1, 0) == 1.0);
  CHECK(n(2, 0) == 0.0);
  CHECK(n(2, 1) == 0.0);
}

TEST_CASE("classify_identity") {
  SUBCASE("one-hot feature picks a row of W") {
    ClassifierHead head;
    head.w_synth = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});  // d_feat = 2, N = 3
    head.w_pseudo = Matrix(2, 0);
    const Matrix f = Matrix::from_rows({{0, 1}});  // e_1
    const Matrix logits = classify_identity(head, f);
    CHECK(logits.cols == 3);
    CHECK(logits(0, 0) == 4.0);
    CHECK(logits(0, 1) == 5.0);
    CHECK(logits(0, 2) == 6.0);
  }
  SUBCASE("empty pseudo block leaves exactly N columns") {
    ClassifierHead head;
    head.w_synth = Matrix::filled(4, 5, 0.1);
    head.w_pseudo = Matrix(4, 0);
    CHECK(classify_identity(head, Matrix::zeros(2, 4)).cols == 5);
    CHECK(head.width() == 5);
  }
  SUBCASE("matches affine_forward with zero bias") {
    Rng rng(21);
    for (int t = 0; t < 10; ++t) {
      ClassifierHead head;
      head.w_synth = oracles::random_matrix(4, 3, rng);
      head.w_pseudo = oracles::random_matrix(4, 2, rng);
      const Matrix f = oracles::random_matrix(5, 4, rng);
      const Matrix logits = classify_identity(head, f);

      Matrix w_full(4, 5);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) w_full(r, c) = head.w_synth(r, c);
        for (int c = 0; c < 2; ++c) w_full(r, 3 + c) = head.w_pseudo(r, c);
      }
      const Matrix expected = affine_forward(f, w_full, Matrix::zeros(1, 5));
      CHECK(max_abs_diff(logits, expected) == 0.0);
    }
  }
  SUBCASE("on-tape version agrees with the plain one") {
    Rng rng(22);
    ClassifierHead head;
    head.w_synth = oracles::random_matrix(3, 4, rng);
    head.w_pseudo = oracles::random_matrix(3, 2, rng);
    const Matrix f = oracles::random_matrix(4, 3, rng);
    GradTape tape;
    const auto logits = classify_on_tape(tape, head, tape.constant(f), /*trainable=*/true);
    CHECK(max_abs_diff(tape.value(logits), classify_identity(head, f)) == 0.0);
  }
}

TEST_CASE("adaptive_init") {
  SUBCASE("cluster mean of two unit points") {
    const Matrix feats = Matrix::from_rows({{1, 0}, {0, 1}});
    const Matrix w2 = class_mean_columns(feats, {{0, 1}});
    CHECK(w2.rows == 2);
    CHECK(w2.cols == 1);
    CHECK(w2(0, 0) == doctest::Approx(0.5));
    CHECK(w2(1, 0) == doctest::Approx(0.5));
  }
  SUBCASE("single-point cluster copies the feature") {
    const Matrix feats = Matrix::from_rows({{0.25, -0.5, 1.0}});
    const Matrix w2 = class_mean_columns(feats, {{0}});
    CHECK(w2(0, 0) == 0.25);
    CHECK(w2(1, 0) == -0.5);
    CHECK(w2(2, 0) == 1.0);
  }
  SUBCASE("empty cluster is an internal error") {
    const Matrix feats = Matrix::from_rows({{1.0, 2.0}});
    CHECK_THROWS_AS(class_mean_columns(feats, {{}}), std::logic_error);
  }
  SUBCASE("W1 carries over bit-identically") {
    Rng rng(31);
    ClassifierHead prev;
    prev.w_synth = oracles::random_matrix(4, 6, rng);
    prev.w_pseudo = oracles::random_matrix(4, 3, rng);
    const Matrix fresh = oracles::random_matrix(4, 6, rng);
    const Matrix w2 = oracles::random_matrix(4, 2, rng);
    const ClassifierHead head = adaptive_init(prev, fresh, w2);
    CHECK(head.w_synth.data == prev.w_synth.data);  // not the fresh matrix
    CHECK(head.w_pseudo.data == w2.data);
    const ClassifierHead first = adaptive_init(std::nullopt, fresh, w2);
    CHECK(first.w_synth.data == fresh.data);
  }
}

TEST_CASE("discriminate") {
  SUBCASE("zero weights answer (0.5, 0.5) for any input") {
    DiscriminatorParams disc;
    disc.w1 = Matrix::zeros(3, 4);
    disc.b1 = Matrix::zeros(1, 4);
    disc.w2 = Matrix::zeros(4, 4);
    disc.b2 = Matrix::zeros(1, 4);
    disc.w3 = Matrix::zeros(4, 2);
    disc.b3 = Matrix::zeros(1, 2);
    Rng rng(41);
    const Matrix probs = discriminate(disc, oracles::random_matrix(6, 3, rng));
    for (int i = 0; i < probs.rows; ++i) {
      CHECK(probs(i, 0) == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(probs(i, 1) == doctest::Approx(0.5).epsilon(1e-15));
    }
  }
  SUBCASE("rows sum to one") {
    const DiscriminatorParams disc = make_discriminator(5, 4, Rng(42));
    Rng rng(43);
    const Matrix probs = discriminate(disc, oracles::random_matrix(8, 5, rng));
    for (int i = 0; i < probs.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < probs.cols; ++j) s += probs(i, j);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
    CHECK(probs.cols == 2);
  }
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
  Rng rng(51);
  ModelParams params;
  params.enc = make_encoder(4, 6, 3, Rng(52));
  params.disc = make_discriminator(3, 5, Rng(53));
  params.head.w_synth = oracles::random_matrix(3, 7, rng);
  params.head.w_pseudo = oracles::random_matrix(3, 2, rng);

  const std::string path = temp_path("domainmix_test_ckpt.bin");
  save_checkpoint(path, params, 11, 0xdeadbeefULL);

  SUBCASE("round trip is bit exact") {
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.epoch == 11);
    CHECK(loaded.config_hash == 0xdeadbeefULL);
    CHECK(loaded.params.enc.w1.data == params.enc.w1.data);
    CHECK(loaded.params.head.w_pseudo.data == params.head.w_pseudo.data);
    CHECK(backbone_hash(loaded.params) == backbone_hash(params));
    CHECK(discriminator_hash(loaded.params) == discriminator_hash(params));
  }
  SUBCASE("a truncated payload is rejected") {
    std::FILE* in = std::fopen(path.c_str(), "rb");
    REQUIRE(in != nullptr);
    std::fseek(in, 0, SEEK_END);
    const long size = std::ftell(in);
    std::fseek(in, 0, SEEK_SET);
    std::string blob(static_cast<size_t>(size), '\0');
    REQUIRE(std::fread(blob.data(), 1, blob.size(), in) == blob.size());
    std::fclose(in);

    const std::string bad_path = temp_path("domainmix_test_ckpt_bad.bin");
    std::FILE* out = std::fopen(bad_path.c_str(), "wb");
    REQUIRE(out != nullptr);
    std::fwrite(blob.data(), 1, blob.size() - 16, out);
    std::fclose(out);
    CHECK_THROWS_AS(load_checkpoint(bad_path), std::runtime_error);
    std::filesystem::remove(bad_path);
  }
  std::filesystem::remove(path);
}

TEST_CASE("freeze-contract hashes react to the right weights") {
  ModelParams params;
  params.enc = make_encoder(4, 6, 3, Rng(61));
  params.disc = make_discriminator(3, 5, Rng(62));
  params.head.w_synth = Matrix::filled(3, 4, 0.5);
  params.head.w_pseudo = Matrix(3, 0);

  const uint64_t b0 = backbone_hash(params);
  const uint64_t d0 = discriminator_hash(params);
  params.disc.w2(0, 0) += 1e-12;
  CHECK(discriminator_hash(params) != d0);
  CHECK(backbone_hash(params) == b0);
  params.head.w_synth(0, 0) += 1e-12;
  CHECK(backbone_hash(params) != b0);
}
