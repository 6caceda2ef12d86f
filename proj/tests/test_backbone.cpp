#include "doctest.h"

#include <cmath>
#include <random>

#include "neuroalign/alignment_head.hpp"
#include "neuroalign/backbone.hpp"
#include "neuroalign/checkpoint.hpp"
#include "neuroalign/error.hpp"
#include "neuroalign/losses.hpp"
#include "neuroalign/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace neuroalign;

namespace {

Tensor images(std::size_t n, std::uint64_t seed) { return synthetic_images(n, 32, 32, seed); }

bool finite(const Tensor& t) { return all_finite(t.values()); }

LayerActivations toy_acts(const RowMatrix& v1, const RowMatrix& v2, const RowMatrix& v4, const RowMatrix& it) {
  LayerActivations a;
  const RowMatrix* m[4] = {&v1, &v2, &v4, &it};
  for (std::size_t s = 0; s < 4; ++s) {
    a.stages[s] = Tensor::from_matrix(*m[s]).reshaped({static_cast<std::size_t>(m[s]->rows()),
                                                      static_cast<std::size_t>(m[s]->cols()), 1, 1});
  }
  return a;
}

}  // namespace

TEST_CASE("full spec on 224 x 224 input gives 1000 logits") {
  const Backbone b = Backbone::build(BackboneSpec::full(), 1);
  const auto acts = b.forward(Tensor({2, 3, 224, 224}, 0.4));
  CHECK(acts.logits.rows() == 2);
  CHECK(acts.logits.cols() == 1000);
}

TEST_CASE("tiny spec: four stages with non-increasing spatial size") {
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 2);
  const auto acts = b.forward(images(4, 1));
  std::size_t prev = 1u << 30;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const auto& t = acts.stages[s];
    REQUIRE(t.rank() == 4);
    CHECK(t.dim(0) == 4);
    CHECK(t.dim(1) == BackboneSpec::tiny().stage_channels[s]);
    CHECK(t.dim(2) * t.dim(3) <= prev);
    prev = t.dim(2) * t.dim(3);
  }
  CHECK(acts.logits.cols() == 10);
  const auto dims = b.stage_flat_dims();
  CHECK(dims == std::array<std::size_t, 4>{1024, 512, 256, 128});
}

TEST_CASE("same seed and input give identical logits") {
  const Backbone a = Backbone::build(BackboneSpec::tiny(), 3);
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 3);
  const Tensor x = images(3, 2);
  CHECK(a.forward(x).logits == a.forward(x).logits);
  CHECK(a.forward(x).logits == b.forward(x).logits);
  const Backbone c = Backbone::build(BackboneSpec::tiny(), 4);
  CHECK(a.forward(x).logits != c.forward(x).logits);
}

TEST_CASE("batch sizes 16 and 1") {
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 5);
  for (std::size_t n : {16u, 1u}) {
    const auto acts = b.forward(images(n, 3));
    for (const auto& t : acts.stages) CHECK(t.dim(0) == n);
    CHECK(static_cast<std::size_t>(acts.logits.rows()) == n);
  }
}

TEST_CASE("zero images give finite activations") {
  Backbone b = Backbone::build(BackboneSpec::tiny(), 6);
  const Tensor zeros({4, 3, 32, 32}, 0.0);
  const auto acts = b.forward(zeros);
  for (const auto& t : acts.stages) CHECK(finite(t));
  ForwardOptions o;
  const auto train_acts = b.forward_train(zeros, o, nullptr);
  for (const auto& t : train_acts.stages) CHECK(finite(t));
}

TEST_CASE("invalid specs are rejected") {
  BackboneSpec s = BackboneSpec::tiny();
  s.n_classes = 0;
  CHECK_THROWS_AS(Backbone::build(s, 0), InvalidArgument);
  s = BackboneSpec::tiny();
  s.recurrence_counts[2] = 0;
  CHECK_THROWS_AS(Backbone::build(s, 0), InvalidArgument);
}

TEST_CASE("teacher labels are in range and deterministic") {
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 7);
  const Tensor x = images(20, 4);
  const auto labels = teacher_labels(b, x, 8);
  REQUIRE(labels.size() == 20);
  for (int l : labels) {
    CHECK(l >= 0);
    CHECK(l < 10);
  }
  CHECK(teacher_labels(b, x, 8) == labels);
  CHECK(teacher_labels(b, x, 3) == labels);
}

TEST_CASE("decoder weights favoring class 3 label every image 3") {
  Backbone b = Backbone::build(BackboneSpec::tiny(), 8);
  auto& dec = b.decoder();
  dec.weight.value.fill(0.0);
  dec.bias.value.fill(0.0);
  dec.bias.value[3] = 1.0;
  const auto labels = teacher_labels(b, images(12, 5));
  for (int l : labels) CHECK(l == 3);
}

TEST_CASE("checkpoint round trip preserves outputs bit for bit") {
  testsupport::TempDir tmp;
  Backbone b = Backbone::build(BackboneSpec::tiny(), 9);
  b.calibrate_batchnorm(images(16, 6), 8);
  AlignmentHead h = AlignmentHead::build({16, 24}, b.stage_flat_dims(), 10);
  save_checkpoint(tmp / "ckpt", b, &h, {{"note", "x"}});
  const ModelBundle m = load_checkpoint(tmp / "ckpt");
  const Tensor x = images(3, 7);
  const auto a1 = b.forward(x), a2 = m.backbone.forward(x);
  CHECK(a1.logits == a2.logits);
  REQUIRE(m.head.has_value());
  CHECK(h.encode(a1) == m.head->encode(a2));
  CHECK(m.extra["note"] == "x");
}

TEST_CASE("every trainable backbone parameter receives gradient from the combined loss") {
  Backbone b = Backbone::build(BackboneSpec::tiny(), 11);
  AlignmentHead h = AlignmentHead::build({32, 16}, b.stage_flat_dims(), 12);
  const Tensor x = images(6, 8);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix real(6, 16);
  for (Eigen::Index i = 0; i < real.size(); ++i) real.data()[i] = normal(rng);
  const std::vector<int> labels{0, 1, 2, 3, 4, 5};

  BackboneTape tape;
  HeadTape htape;
  b.zero_grad();
  h.zero_grad();
  const auto acts = b.forward_train(x, {true, false}, &tape);
  const RowMatrix gen = h.encode(acts, &htape);
  AlignmentGradients g;
  alignment_loss(acts.logits, labels, gen, real, 40.0, {}, &g);
  LayerGradients lg;
  const auto dstages = h.backward(htape, g.d_generated);
  for (std::size_t s = 0; s < kNumStages; ++s) lg.stages[s] = dstages[s];
  lg.logits = g.d_logits;
  b.backward(tape, lg);
  for (const auto& p : b.parameters()) {
    double norm = 0.0;
    for (double v : p.parameter->grad.values()) norm += v * v;
    CHECK_MESSAGE(norm > 0.0, p.name);
  }
}

TEST_CASE("head output shape for per-layer 128 and target 1024") {
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 14);
  const AlignmentHead h = AlignmentHead::build({128, 1024}, b.stage_flat_dims(), 15);
  const RowMatrix gen = h.encode(b.forward(images(16, 9)));
  CHECK(gen.rows() == 16);
  CHECK(gen.cols() == 1024);
  CHECK(gen.allFinite());
}

TEST_CASE("zero activations with zero encoder biases generate the output bias") {
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 16);
  AlignmentHead h = AlignmentHead::build({8, 5}, b.stage_flat_dims(), 17);
  for (auto& e : h.encoders) e.bias.value.fill(0.0);
  LayerActivations zeros;
  const auto shapes = b.stage_shapes();
  for (std::size_t s = 0; s < kNumStages; ++s) {
    Shape sh{4};
    sh.insert(sh.end(), shapes[s].begin(), shapes[s].end());
    zeros.stages[s] = Tensor(sh, 0.0);
  }
  const RowMatrix gen = h.encode(zeros);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index d = 0; d < 5; ++d) CHECK(gen(i, d) == h.output.bias.value[static_cast<std::size_t>(d)]);
}

TEST_CASE("hand-set toy head matches hand computation") {
  // Each stage has 2 features and encodes to 1 unit; the output sums units.
  AlignmentHead h = AlignmentHead::build({1, 2}, {2, 2, 2, 2}, 0);
  const double w[4][2] = {{1, 0}, {0, 1}, {1, -1}, {-1, 0}};
  for (std::size_t s = 0; s < 4; ++s) {
    h.encoders[s].weight.value[0] = w[s][0];
    h.encoders[s].weight.value[1] = w[s][1];
    h.encoders[s].bias.value[0] = 0.0;
  }
  // output row 0 = sum of units, row 1 = V1 unit only; bias (0.5, 0)
  for (std::size_t k = 0; k < 4; ++k) {
    h.output.weight.value[k] = 1.0;
    h.output.weight.value[4 + k] = k == 0 ? 1.0 : 0.0;
  }
  h.output.bias.value[0] = 0.5;
  h.output.bias.value[1] = 0.0;
  RowMatrix x(1, 2);
  x << 2, 3;
  const RowMatrix gen = h.encode(toy_acts(x, x, x, x));
  // units: relu(2)=2, relu(3)=3, relu(-1)=0, relu(-2)=0
  CHECK(gen(0, 0) == 5.5);
  CHECK(gen(0, 1) == 2.0);
}

TEST_CASE("head is row-wise, finite and order-sensitive") {
  const Backbone b = Backbone::build(BackboneSpec::tiny(), 18);
  const AlignmentHead h = AlignmentHead::build({8, 6}, b.stage_flat_dims(), 19);
  const Tensor x = images(5, 10);
  const RowMatrix gen = h.encode(b.forward(x));
  CHECK(gen.allFinite());

  const std::vector<std::size_t> perm{4, 2, 0, 3, 1};
  const RowMatrix pgen = h.encode(b.forward(x.gather0(perm)));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK((pgen.row(static_cast<Eigen::Index>(i)) - gen.row(static_cast<Eigen::Index>(perm[i]))).cwiseAbs().maxCoeff() < 1e-12);
  }

  // Same sizes in V1 and IT slots so they can be swapped.
  AlignmentHead toy = AlignmentHead::build({3, 4}, {5, 5, 5, 5}, 20);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix a(2, 5), c(2, 5), z = RowMatrix::Zero(2, 5);
  for (Eigen::Index i = 0; i < 10; ++i) {
    a.data()[i] = normal(rng);
    c.data()[i] = normal(rng);
  }
  CHECK(toy.encode(toy_acts(a, z, z, c)) != toy.encode(toy_acts(c, z, z, a)));
}

TEST_CASE("head rejects activations of the wrong size") {
  const AlignmentHead h = AlignmentHead::build({3, 4}, {5, 5, 5, 5}, 22);
  const RowMatrix ok = RowMatrix::Ones(2, 5), bad = RowMatrix::Ones(2, 6);
  CHECK_THROWS_AS(h.encode(toy_acts(ok, ok, ok, bad)), InvalidArgument);
}
