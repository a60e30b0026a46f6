#include "fea/grad_suite.hpp"

#include <functional>

#include "fea/alignment.hpp"
#include "fea/encoders.hpp"
#include "fea/fusion.hpp"
#include "fea/grounding.hpp"
#include "fea/rng.hpp"

namespace fea {

using nn::Tape;
using nn::Var;

namespace {

template <class T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Weights of magnitude in [0.5, 1.5] with alternating sign, so the summed
// output has no structural zero gradient (softmax rows always sum to one)
// and adjacent entries cannot cancel. The sum itself is left to grad_check,
// which accumulates it in double.
template <class T>
Var<T> probe(Var<T> out, uint64_t seed) {
  Rng rng(seed);
  Tensor<T> w = random_tensor<T>(rng, out.shape(), 0.5, 1.5);
  for (size_t i = 1; i < w.size(); i += 2) w[i] = -w[i];
  return nn::mul(out, out.tape()->constant(std::move(w)));
}

template <class T>
struct Case {
  std::string shape;
  std::vector<Tensor<T>> inputs;
  nn::GraphBuilder<T> f;
};

size_t pick(Rng& rng, int lo, int hi) { return static_cast<size_t>(rng.integer(lo, hi)); }

std::string dims(std::initializer_list<size_t> ds) {
  std::string s;
  for (size_t d : ds) s += (s.empty() ? "" : "x") + std::to_string(d);
  return s;
}

template <class T>
Case<T> make_case(const std::string& op, Rng& rng) {
  const uint64_t ps = rng.next();
  Case<T> c;
  if (op == "linear") {
    const size_t n = pick(rng, 1, 5), a = pick(rng, 1, 6), b = pick(rng, 1, 6);
    c.shape = dims({n, a, b});
    c.inputs = {random_tensor<T>(rng, {n, a}), random_tensor<T>(rng, {a, b})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) { return probe(nn::linear(x[0], x[1]), ps); };
  } else if (op == "softmax") {
    const size_t n = pick(rng, 1, 5), m = pick(rng, 2, 7);
    c.shape = dims({n, m});
    c.inputs = {random_tensor<T>(rng, {n, m}, -2.0, 2.0)};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) { return probe(nn::softmax_rows(x[0]), ps); };
  } else if (op == "layer_norm") {
    // d = 2 normalizes every row to about (+1, -1); its input gradient is
    // eps-sized and float differences cannot resolve it.
    const size_t n = pick(rng, 1, 5), d = pick(rng, 3, 8);
    c.shape = dims({n, d});
    c.inputs = {random_tensor<T>(rng, {n, d}, -2.0, 2.0), random_tensor<T>(rng, {d}, 0.5, 1.5),
                random_tensor<T>(rng, {d})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) { return probe(nn::layer_norm(x[0], x[1], x[2]), ps); };
  } else if (op == "sdp_attention") {
    const size_t n = pick(rng, 1, 5), m = pick(rng, 1, 6), dk = pick(rng, 1, 6), dv = pick(rng, 1, 6);
    c.shape = dims({n, m, dk, dv});
    c.inputs = {random_tensor<T>(rng, {n, dk}), random_tensor<T>(rng, {m, dk}), random_tensor<T>(rng, {m, dv})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) { return probe(nn::sdp_attention(x[0], x[1], x[2]), ps); };
  } else if (op == "mlp2") {
    const size_t n = pick(rng, 1, 4), d = pick(rng, 1, 5), h = pick(rng, 1, 6), o = pick(rng, 1, 5);
    c.shape = dims({n, d, h, o});
    c.inputs = {random_tensor<T>(rng, {n, d}), random_tensor<T>(rng, {d, h}), random_tensor<T>(rng, {h}),
                random_tensor<T>(rng, {h, o}), random_tensor<T>(rng, {o})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) {
      return probe(nn::mlp2(x[0], x[1], x[2], x[3], x[4]), ps);
    };
  } else if (op == "st_map") {
    const size_t t = pick(rng, 1, 4), p = pick(rng, 1, 5), d = pick(rng, 1, 5);
    c.shape = dims({t, p, d});
    c.inputs = {random_tensor<T>(rng, {t, p, d}, -1.5, 1.5)};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) {
      const auto st = nn::st_map(x[0]);
      return nn::concat_rows(probe(st.spatial, ps), probe(st.temporal, ps + 1));
    };
  } else if (op == "cross_attn_spatial" || op == "cross_attn_temporal") {
    const bool spatial = op == "cross_attn_spatial";
    const size_t n = pick(rng, 1, 5), m = spatial ? n : pick(rng, 1, 5), d = pick(rng, 3, 6);
    c.shape = dims({n, m, d});
    c.inputs = {random_tensor<T>(rng, {n, d}),        random_tensor<T>(rng, {m, d}),
                random_tensor<T>(rng, {d, d}),        random_tensor<T>(rng, {d, d}),
                random_tensor<T>(rng, {d, d}),        random_tensor<T>(rng, {d}, 0.5, 1.5),
                random_tensor<T>(rng, {d})};
    c.f = [ps, spatial](Tape<T>&, const std::vector<Var<T>>& x) {
      const nn::CrossAttentionVars<T> p{{x[2], x[3], x[4]}, x[5], x[6]};
      return probe(spatial ? nn::cross_attn_spatial(x[0], x[1], p) : nn::cross_attn_temporal(x[0], x[1], p), ps);
    };
  } else if (op == "self_attn_match") {
    const size_t n = pick(rng, 1, 5), m = pick(rng, 1, 4), d = pick(rng, 2, 6);
    c.shape = dims({n, m, d});
    c.inputs = {random_tensor<T>(rng, {n, d}), random_tensor<T>(rng, {m, d}), random_tensor<T>(rng, {d, d}),
                random_tensor<T>(rng, {d, d}), random_tensor<T>(rng, {d, d})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) {
      return probe(nn::self_attn_match(x[0], x[1], nn::AttentionVars<T>{x[2], x[3], x[4]}), ps);
    };
  } else if (op == "projector") {
    const size_t k = pick(rng, 1, 5), d = pick(rng, 1, 5), dt = pick(rng, 1, 6);
    c.shape = dims({k, d, dt});
    c.inputs = {random_tensor<T>(rng, {k, d}), random_tensor<T>(rng, {d, dt}), random_tensor<T>(rng, {dt}),
                random_tensor<T>(rng, {dt, dt}), random_tensor<T>(rng, {dt})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) {
      return probe(nn::project_tokens(x[0], nn::MlpVars<T>{x[1], x[2], x[3], x[4]}), ps);
    };
  } else if (op == "coord") {
    const size_t k = pick(rng, 1, 5), dt = pick(rng, 1, 6);
    c.shape = dims({k, dt});
    CoordinateQuery q;
    q.p = {rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.4), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0)};
    q.t = {rng.uniform(0.0, 0.4), rng.uniform(0.6, 1.0)};
    q.p_given = rng.uniform() < 0.7;
    q.t_given = !q.p_given || rng.uniform() < 0.5;
    c.inputs = {random_tensor<T>(rng, {k, dt}), random_tensor<T>(rng, {4, dt}), random_tensor<T>(rng, {2, dt}),
                random_tensor<T>(rng, {1})};
    c.f = [ps, q](Tape<T>&, const std::vector<Var<T>>& x) {
      return probe(nn::embed_coordinates(x[0], nn::coord_token(q, x[1], x[2]), x[3]), ps);
    };
  } else if (op == "grounding_head") {
    const size_t k = pick(rng, 1, 5), dt = pick(rng, 1, 6);
    c.shape = dims({k, dt});
    c.inputs = {random_tensor<T>(rng, {k, dt}), random_tensor<T>(rng, {1, dt}), random_tensor<T>(rng, {dt, 4}),
                random_tensor<T>(rng, {4}),     random_tensor<T>(rng, {dt, 2}), random_tensor<T>(rng, {2})};
    c.f = [ps](Tape<T>&, const std::vector<Var<T>>& x) {
      return probe(nn::ground(x[0], nn::HeadVars<T>{x[1], x[2], x[3], x[4], x[5]}), ps);
    };
  } else {
    throw Error(ErrorKind::BadConfig, "unknown op " + op);
  }
  return c;
}

}  // namespace

const std::vector<std::string>& grad_suite_ops() {
  static const std::vector<std::string> ops = {
      "linear",          "softmax",   "layer_norm", "sdp_attention",  "mlp2",
      "st_map",          "cross_attn_spatial",      "cross_attn_temporal", "self_attn_match",
      "projector",       "coord",     "grounding_head"};
  return ops;
}

std::string grad_report_op(const nn::GradCheckReport& r) { return r.name.substr(0, r.name.find(' ')); }

template <class T>
std::vector<nn::GradCheckReport> run_grad_suite(uint64_t seed, int shapes) {
  const auto& ops = grad_suite_ops();
  std::vector<nn::GradCheckReport> out(ops.size() * static_cast<size_t>(shapes));
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < out.size(); ++i) {
    const std::string& op = ops[i / static_cast<size_t>(shapes)];
    Rng rng(Rng::derive(seed, op + "/" + std::to_string(i % static_cast<size_t>(shapes))));
    Case<T> c = make_case<T>(op, rng);
    out[i] = nn::grad_check<T>(op + " " + c.shape, c.f, std::move(c.inputs));
  }
  return out;
}

template std::vector<nn::GradCheckReport> run_grad_suite<float>(uint64_t, int);
template std::vector<nn::GradCheckReport> run_grad_suite<double>(uint64_t, int);

}  // namespace fea
