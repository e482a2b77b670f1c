#include <catch2/catch_amalgamated.hpp>

#include <harcl/objective.hpp>

using namespace harcl;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

CnnShape obj_shape() {
  CnnShape sh;
  sh.channels = 1;
  sh.length = 6;
  sh.filters = 2;
  sh.kernel = 3;
  sh.pool = 2;
  sh.dense = 3;
  sh.classes = 4;
  return sh;
}

}  // namespace

TEST_CASE("method names round-trip through the parser", "[obj]") {
  for (Method m : {Method::plain, Method::lwf, Method::ewc, Method::ewclwf})
    REQUIRE(parse_method(method_name(m)) == m);
  REQUIRE_THROWS_AS(parse_method("sgd"), ConfigError);
}

TEST_CASE("spec resolution degrades to plain when state is missing", "[obj]") {
  const CnnShape sh = obj_shape();
  Rng rng(2);
  const CnnParams<double> params = he_init<double>(sh, rng);
  const TeacherSnapshot<double> teacher(params, {0, 1}, 3.0);
  std::vector<FisherAnchor<double>> anchors(1);
  anchors[0].anchor = params;
  anchors[0].fisher = Gradients<double>(sh);

  SECTION("plain never degrades") {
    const auto r = resolve_loss_spec<double>(Method::plain, nullptr, nullptr, 0.1, 3.0, 5.0);
    REQUIRE_FALSE(r.degraded);
    REQUIRE(r.spec.method == Method::plain);
  }
  SECTION("lwf without a teacher") {
    const auto r = resolve_loss_spec<double>(Method::lwf, nullptr, nullptr, 0.1, 3.0, 5.0);
    REQUIRE(r.degraded);
    REQUIRE(r.spec.method == Method::plain);
    REQUIRE_THAT(r.degrade_reason, ContainsSubstring("teacher snapshot"));
    REQUIRE_THAT(r.degrade_reason, ContainsSubstring("plain CE"));
  }
  SECTION("ewc without anchors (null or empty)") {
    const auto r1 = resolve_loss_spec<double>(Method::ewc, nullptr, nullptr, 0.1, 3.0, 5.0);
    REQUIRE(r1.degraded);
    const std::vector<FisherAnchor<double>> empty;
    const auto r2 = resolve_loss_spec<double>(Method::ewc, nullptr, &empty, 0.1, 3.0, 5.0);
    REQUIRE(r2.degraded);
    REQUIRE_THAT(r2.degrade_reason, ContainsSubstring("fisher anchor"));
  }
  SECTION("ewclwf missing both names both") {
    const auto r = resolve_loss_spec<double>(Method::ewclwf, nullptr, nullptr, 0.1, 3.0, 5.0);
    REQUIRE(r.degraded);
    REQUIRE_THAT(r.degrade_reason, ContainsSubstring("teacher snapshot and fisher anchor"));
  }
  SECTION("ewclwf with only the teacher still degrades") {
    const auto r = resolve_loss_spec<double>(Method::ewclwf, &teacher, nullptr, 0.1, 3.0, 5.0);
    REQUIRE(r.degraded);
    REQUIRE_THAT(r.degrade_reason, ContainsSubstring("fisher anchor"));
    REQUIRE_THAT(r.degrade_reason, !ContainsSubstring("teacher"));
  }
  SECTION("full state resolves to the requested method") {
    const auto r = resolve_loss_spec<double>(Method::ewclwf, &teacher, &anchors, 0.1, 3.0, 5.0);
    REQUIRE_FALSE(r.degraded);
    REQUIRE(r.spec.method == Method::ewclwf);
    REQUIRE(r.spec.teacher == &teacher);
    REQUIRE(r.spec.anchors == &anchors);
  }
}

TEST_CASE("malformed specs are rejected at the objective, not resolved away", "[obj]") {
  const CnnShape sh = obj_shape();
  Rng rng(4);
  const CnnParams<double> params = he_init<double>(sh, rng);
  Batch<double> b;
  b.inputs = Tensor<double>({1, 1, 6});
  b.labels = {0};
  ObjectiveWorkspace<double> ws;
  Gradients<double> g(sh);

  LossSpec<double> spec;
  spec.method = Method::lwf;  // no teacher attached
  REQUIRE_THROWS_AS(grad_total_loss(spec, params, b, nullptr, g, ws), ConfigError);

  spec.method = Method::ewc;  // no anchors attached
  REQUIRE_THROWS_AS(grad_total_loss(spec, params, b, nullptr, g, ws), ConfigError);

  const TeacherSnapshot<double> teacher(params, {0, 1}, 3.0);
  spec.method = Method::lwf;
  spec.teacher = &teacher;
  spec.alpha = 2.0;
  REQUIRE_THROWS_AS(grad_total_loss(spec, params, b, nullptr, g, ws), ConfigError);
  spec.alpha = 0.1;

  CnnShape other = sh;
  other.dense = 5;
  Rng rng2(5);
  const CnnParams<double> other_params = he_init<double>(other, rng2);
  const TeacherSnapshot<double> wrong(other_params, {0, 1}, 3.0);
  spec.teacher = &wrong;
  REQUIRE_THROWS_AS(grad_total_loss(spec, params, b, nullptr, g, ws), StructuralError);
}

TEST_CASE("objective values compose exactly as the value-level ops", "[obj]") {
  const CnnShape sh = obj_shape();
  Rng rng(6);
  const CnnParams<double> params = he_init<double>(sh, rng);
  Rng trng(7);
  const TeacherSnapshot<double> teacher(he_init<double>(sh, trng), {0, 1}, 3.0);
  std::vector<FisherAnchor<double>> anchors(1);
  Rng arng(8);
  anchors[0].anchor = he_init<double>(sh, arng);
  anchors[0].fisher = Gradients<double>(sh);
  for (auto* t : anchors[0].fisher.tensors())
    for (auto& x : t->v) x = 0.5;
  anchors[0].lambda = 5.0;

  Batch<double> b;
  b.inputs = Tensor<double>({3, 1, 6});
  Rng drng(9);
  for (auto& x : b.inputs.v) x = drng.uniform(-1, 1);
  b.labels = {2, 3, 0};

  ObjectiveWorkspace<double> ws;
  auto value_of = [&](Method m, Eq6Mode eq6) {
    LossSpec<double> spec;
    spec.method = m;
    spec.teacher = &teacher;
    spec.anchors = &anchors;
    spec.eq6 = eq6;
    Gradients<double> g(sh);
    return grad_total_loss(spec, params, b, nullptr, g, ws);
  };

  const LossBreakdown plain = value_of(Method::plain, Eq6Mode::single_count);
  REQUIRE(plain.total == plain.ce);
  REQUIRE(plain.kd == 0.0);
  REQUIRE(plain.penalty == 0.0);

  const LossBreakdown lwf = value_of(Method::lwf, Eq6Mode::single_count);
  REQUIRE(lwf.ce == plain.ce);  // same forward pass, same CE
  REQUIRE(lwf.total == lwf_total_loss(lwf.ce, lwf.kd, 0.1));

  const LossBreakdown ewc = value_of(Method::ewc, Eq6Mode::single_count);
  REQUIRE(ewc.penalty == ewc_penalty(params, anchors));
  REQUIRE(ewc.total == ewc.ce + ewc.penalty);

  const LossBreakdown both = value_of(Method::ewclwf, Eq6Mode::single_count);
  REQUIRE(both.kd == lwf.kd);
  REQUIRE(both.total == ewclwf_total_loss(both.ce, both.kd, both.penalty, 0.1));

  const LossBreakdown lit = value_of(Method::ewclwf, Eq6Mode::literal);
  REQUIRE(lit.total ==
          ewclwf_total_loss(lit.ce, lit.kd, lit.penalty, 0.1, Eq6Mode::literal));
  REQUIRE(lit.total > both.total);  // the literal reading double-counts CE
}

TEST_CASE("internal kd term equals the probability-space ops", "[obj]") {
  // same restricted support, same temperature: softmax(z/T) over old columns
  // must match restrict -> temperature_scale on full softmax probabilities
  Rng rng(14);
  const std::size_t B = 8, C = 5;
  const std::vector<int> old_idx = {0, 2, 3};
  const double T = 3.0;

  Tensor<double> zs({B, C}), zt({B, C});
  for (auto& x : zs.v) x = rng.uniform(-5.0, 5.0);
  for (auto& x : zt.v) x = rng.uniform(-5.0, 5.0);

  const double internal = detail::kd_batch_with_grad<double>(zs, zt, old_idx, T, 1.0, nullptr);

  double by_ops = 0;
  for (std::size_t b = 0; b < B; ++b) {
    auto restricted = [&](const Tensor<double>& z) {
      Distribution d;
      d.classes = old_idx;
      double sum = 0;
      for (int k : old_idx) sum += std::exp(z.at(b, std::size_t(k)));
      for (int k : old_idx) d.p.push_back(std::exp(z.at(b, std::size_t(k))) / sum);
      return d;
    };
    const Distribution t = temperature_scale(restricted(zt), T);
    const Distribution s = temperature_scale(restricted(zs), T);
    by_ops += kd_loss(t, s);
  }
  by_ops /= double(B);
  REQUIRE_THAT(internal, WithinAbs(by_ops, 1e-9));
}

TEST_CASE("kd gradient pushes the student toward the teacher", "[obj]") {
  // one step of gradient descent on the KD term alone must not increase it
  Rng rng(15);
  const std::size_t B = 4, C = 5;
  const std::vector<int> old_idx = {0, 1, 4};
  Tensor<double> zs({B, C}), zt({B, C});
  for (auto& x : zs.v) x = rng.uniform(-2, 2);
  for (auto& x : zt.v) x = rng.uniform(-2, 2);

  Tensor<double> d({B, C});
  const double before = detail::kd_batch_with_grad<double>(zs, zt, old_idx, 3.0, 1.0, &d);
  for (std::size_t i = 0; i < zs.size(); ++i) zs[i] -= 5.0 * d[i];
  const double after = detail::kd_batch_with_grad<double>(zs, zt, old_idx, 3.0, 1.0, nullptr);
  REQUIRE(after <= before);
}

TEST_CASE("teacher forward runs in eval mode even when the student drops out", "[obj]") {
  // with dropout active, two different masks change the student pass but the
  // teacher's contribution stays put; verify by keeping logits fixed: a mask
  // of ones equals eval mode exactly
  const CnnShape sh = obj_shape();
  Rng rng(16);
  const CnnParams<double> params = he_init<double>(sh, rng);
  Rng trng(17);
  const TeacherSnapshot<double> teacher(he_init<double>(sh, trng), {0, 1}, 3.0);

  Batch<double> b;
  b.inputs = Tensor<double>({2, 1, 6});
  Rng drng(18);
  for (auto& x : b.inputs.v) x = drng.uniform(-1, 1);
  b.labels = {2, 3};

  LossSpec<double> spec;
  spec.method = Method::lwf;
  spec.teacher = &teacher;

  ObjectiveWorkspace<double> ws;
  Gradients<double> g(sh);
  Tensor<double> ones({2, sh.dense});
  ones.fill(1.0);
  const LossBreakdown masked = grad_total_loss(spec, params, b, &ones, g, ws);
  const LossBreakdown eval = grad_total_loss(spec, params, b, nullptr, g, ws);
  REQUIRE(masked.kd == eval.kd);
  REQUIRE(masked.ce == eval.ce);
}
