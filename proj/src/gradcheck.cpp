#include "scoreag/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "scoreag/graph.hpp"
#include "scoreag/rng.hpp"

namespace scoreag {

namespace {

constexpr double kFdStep = 1e-5;
// Inputs whose relu pre-activations land closer to the kink than this are
// regenerated; finite differences straddle the kink otherwise.
constexpr double kKinkMargin = 1e-3;

struct Step {
    Op op = Op::Input;
    Nonlin nl = Nonlin::Relu;
    double c = 0.0;
    int a = -1, b = -1, w = -1;
    int axis = 0;
    int64_t start = 0, len = 0;
    std::vector<int64_t> shape;
    std::vector<int> targets;
    Im2colAttrs ic;
    Tensor init; // Input steps only
};

struct Recipe {
    std::vector<Step> steps;
    std::vector<int> input_steps;
    int final_step = -1;
};

// Replays the recipe into a fresh graph. `inputs` overrides the stored input
// values (same order as recipe.input_steps).
double eval_recipe(const Recipe& r, const std::vector<Tensor>& inputs,
                   std::vector<Tensor>* grads_out, const Graph** graph_out = nullptr,
                   Graph* storage = nullptr) {
    Graph local;
    Graph& g = storage ? *storage : local;
    std::vector<NodeRef> refs(r.steps.size());
    size_t input_i = 0;
    for (size_t i = 0; i < r.steps.size(); ++i) {
        const Step& s = r.steps[i];
        switch (s.op) {
            case Op::Input:
                refs[i] = g.input("in" + std::to_string(input_i), inputs[input_i], true);
                ++input_i;
                break;
            case Op::Add: refs[i] = g.add(refs[s.a], refs[s.b]); break;
            case Op::Sub: refs[i] = g.sub(refs[s.a], refs[s.b]); break;
            case Op::Mul: refs[i] = g.mul(refs[s.a], refs[s.b]); break;
            case Op::Scale: refs[i] = g.scale(refs[s.a], s.c); break;
            case Op::Matmul: refs[i] = g.matmul(refs[s.a], refs[s.b]); break;
            case Op::Affine: refs[i] = g.affine(refs[s.a], refs[s.w], refs[s.b]); break;
            case Op::Nonlin: refs[i] = g.nonlin(refs[s.a], s.nl); break;
            case Op::Sum: refs[i] = g.sum(refs[s.a]); break;
            case Op::Mean: refs[i] = g.mean(refs[s.a]); break;
            case Op::SoftmaxXent: refs[i] = g.softmax_xent(refs[s.a], s.targets); break;
            case Op::SqError: refs[i] = g.sq_error(refs[s.a], refs[s.b]); break;
            case Op::Concat: refs[i] = g.concat({refs[s.a], refs[s.b]}, s.axis); break;
            case Op::Slice: refs[i] = g.slice(refs[s.a], s.axis, s.start, s.len); break;
            case Op::Broadcast: refs[i] = g.broadcast(refs[s.a], s.shape); break;
            case Op::Reshape: refs[i] = g.reshape(refs[s.a], s.shape); break;
            case Op::Im2col: refs[i] = g.im2col(refs[s.a], s.ic); break;
            default: break;
        }
    }
    NodeRef out = refs[static_cast<size_t>(r.final_step)];
    double v = g.value(out).data[0];
    if (grads_out) {
        g.backward(out);
        grads_out->clear();
        for (int si : r.input_steps) {
            grads_out->push_back(g.grad_of(refs[static_cast<size_t>(si)]));
        }
    }
    if (graph_out) *graph_out = &g;
    return v;
}

std::vector<int64_t> random_shape(Rng& rng) {
    if (rng.uniform() < 0.4) return {rng.uniform_int(1, 8)};
    return {rng.uniform_int(1, 8), rng.uniform_int(1, 8)};
}

Recipe make_recipe(Rng& rng) {
    Recipe r;
    auto new_input = [&](std::vector<int64_t> shape) {
        Step s;
        s.op = Op::Input;
        s.init = Tensor::randn(shape, rng);
        s.shape = std::move(shape);
        r.steps.push_back(std::move(s));
        int idx = static_cast<int>(r.steps.size()) - 1;
        r.input_steps.push_back(idx);
        return idx;
    };
    auto push = [&](Step s) {
        r.steps.push_back(std::move(s));
        return static_cast<int>(r.steps.size()) - 1;
    };
    auto shape_of = [&](int idx) { return r.steps[static_cast<size_t>(idx)].shape; };

    std::vector<int> pool;
    int n0 = static_cast<int>(rng.uniform_int(1, 2));
    for (int i = 0; i < n0; ++i) pool.push_back(new_input(random_shape(rng)));

    int n_ops = static_cast<int>(rng.uniform_int(3, 8));
    for (int it = 0; it < n_ops; ++it) {
        int src = pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
        std::vector<int64_t> sh = shape_of(src);
        int choice = static_cast<int>(rng.uniform_int(0, 11));
        Step s;
        switch (choice) {
            case 0: case 1: case 2: { // binary elementwise with a fresh input
                s.op = choice == 0 ? Op::Add : (choice == 1 ? Op::Sub : Op::Mul);
                s.a = src;
                s.b = new_input(sh);
                s.shape = sh;
                pool.push_back(push(std::move(s)));
                break;
            }
            case 3: {
                s.op = Op::Scale;
                s.a = src;
                s.c = rng.uniform(-2.0, 2.0);
                s.shape = sh;
                pool.push_back(push(std::move(s)));
                break;
            }
            case 4: case 5: { // nonlinearity
                s.op = Op::Nonlin;
                int k = static_cast<int>(rng.uniform_int(0, 3));
                s.nl = k == 0 ? Nonlin::Relu : (k == 1 ? Nonlin::Tanh : (k == 2 ? Nonlin::Sigmoid : Nonlin::Silu));
                s.a = src;
                s.shape = sh;
                pool.push_back(push(std::move(s)));
                break;
            }
            case 6: { // matmul with fresh right operand
                if (sh.size() != 2) break;
                int64_t p = rng.uniform_int(1, 8);
                s.op = Op::Matmul;
                s.a = src;
                s.b = new_input({sh[1], p});
                s.shape = {sh[0], p};
                pool.push_back(push(std::move(s)));
                break;
            }
            case 7: { // affine with fresh weight/bias
                int64_t in_dim = sh.size() == 1 ? sh[0] : sh[1];
                int64_t out_dim = rng.uniform_int(1, 8);
                s.op = Op::Affine;
                s.a = src;
                s.w = new_input({in_dim, out_dim});
                s.b = new_input({out_dim});
                s.shape = sh.size() == 1 ? std::vector<int64_t>{out_dim}
                                         : std::vector<int64_t>{sh[0], out_dim};
                pool.push_back(push(std::move(s)));
                break;
            }
            case 8: { // concat with fresh input
                s.op = Op::Concat;
                s.axis = sh.size() == 2 ? static_cast<int>(rng.uniform_int(0, 1)) : 0;
                s.a = src;
                std::vector<int64_t> other = sh;
                if (sh.size() == 2) {
                    other[static_cast<size_t>(s.axis)] = rng.uniform_int(1, 8);
                    s.shape = sh;
                    s.shape[static_cast<size_t>(s.axis)] += other[static_cast<size_t>(s.axis)];
                } else {
                    other[0] = rng.uniform_int(1, 8);
                    s.shape = {sh[0] + other[0]};
                }
                s.b = new_input(other);
                pool.push_back(push(std::move(s)));
                break;
            }
            case 9: { // slice
                s.op = Op::Slice;
                s.axis = sh.size() == 2 ? static_cast<int>(rng.uniform_int(0, 1)) : 0;
                int64_t extent = sh.size() == 1 ? sh[0] : sh[static_cast<size_t>(s.axis)];
                s.len = rng.uniform_int(1, extent);
                s.start = rng.uniform_int(0, extent - s.len);
                s.a = src;
                s.shape = sh;
                if (sh.size() == 1) {
                    s.shape[0] = s.len;
                } else {
                    s.shape[static_cast<size_t>(s.axis)] = s.len;
                }
                pool.push_back(push(std::move(s)));
                break;
            }
            case 10: { // broadcast a vector to a matrix
                if (sh.size() != 1) break;
                s.op = Op::Broadcast;
                s.a = src;
                s.shape = {rng.uniform_int(1, 8), sh[0]};
                pool.push_back(push(std::move(s)));
                break;
            }
            case 11: { // reshape: rank-2 flatten or rank-1 fold
                s.op = Op::Reshape;
                s.a = src;
                if (sh.size() == 2) {
                    s.shape = {sh[0] * sh[1]};
                } else {
                    int64_t n = sh[0];
                    int64_t d = 1;
                    for (int64_t f = 2; f * f <= n; ++f) {
                        if (n % f == 0) d = f;
                    }
                    if (d == 1) break;
                    s.shape = {n / d, d};
                }
                pool.push_back(push(std::move(s)));
                break;
            }
        }
    }

    // im2col lane: a dedicated small image input so the op is exercised often.
    if (rng.uniform() < 0.35) {
        Im2colAttrs ic;
        ic.h = static_cast<int>(rng.uniform_int(3, 5));
        ic.w = static_cast<int>(rng.uniform_int(3, 5));
        ic.c = static_cast<int>(rng.uniform_int(1, 2));
        ic.kh = 2;
        ic.kw = 2;
        ic.stride = static_cast<int>(rng.uniform_int(1, 2));
        ic.pad = static_cast<int>(rng.uniform_int(0, 1));
        int64_t batch = rng.uniform_int(1, 2);
        int img = static_cast<int>(r.steps.size());
        {
            Step s;
            s.op = Op::Input;
            s.shape = {batch, static_cast<int64_t>(ic.h) * ic.w * ic.c};
            s.init = Tensor::randn(s.shape, rng);
            r.steps.push_back(std::move(s));
            r.input_steps.push_back(img);
        }
        Step s;
        s.op = Op::Im2col;
        s.a = img;
        s.ic = ic;
        int oh = (ic.h + 2 * ic.pad - ic.kh) / ic.stride + 1;
        int ow = (ic.w + 2 * ic.pad - ic.kw) / ic.stride + 1;
        s.shape = {batch * oh * ow, static_cast<int64_t>(ic.kh) * ic.kw * ic.c};
        pool.push_back(push(std::move(s)));
    }

    // finalize to a scalar
    int last = pool.back();
    std::vector<int64_t> sh = shape_of(last);
    Step fin;
    int fchoice = static_cast<int>(rng.uniform_int(0, 3));
    if (fchoice == 3 && sh.size() == 2 && sh[1] >= 2) {
        fin.op = Op::SoftmaxXent;
        fin.a = last;
        for (int64_t rrow = 0; rrow < sh[0]; ++rrow) {
            fin.targets.push_back(static_cast<int>(rng.uniform_int(0, sh[1] - 1)));
        }
    } else if (fchoice == 2) {
        fin.op = Op::SqError;
        fin.a = last;
        Step tgt;
        tgt.op = Op::Input;
        tgt.shape = sh;
        tgt.init = Tensor::randn(sh, rng);
        r.steps.push_back(std::move(tgt));
        int ti = static_cast<int>(r.steps.size()) - 1;
        r.input_steps.push_back(ti);
        fin.b = ti;
    } else if (fchoice == 1) {
        fin.op = Op::Mean;
        fin.a = last;
    } else {
        fin.op = Op::Sum;
        fin.a = last;
    }
    fin.shape = {};
    r.final_step = push(std::move(fin));
    return r;
}

bool relu_inputs_safe(const Recipe& r, const std::vector<Tensor>& inputs) {
    Graph g;
    eval_recipe(r, inputs, nullptr, nullptr, &g);
    for (size_t i = 0; i < g.size(); ++i) {
        const Node& n = g.node(static_cast<int>(i));
        if (n.op == Op::Nonlin && n.nl == Nonlin::Relu) {
            const Node& p = g.node(n.parents[0]);
            for (double v : p.value.data) {
                if (std::abs(v) < kKinkMargin) return false;
            }
        }
    }
    return true;
}

} // namespace

GradCheckReport run_gradcheck(int n_cases, uint64_t seed) {
    GradCheckReport rep;
    for (int c = 0; c < n_cases; ++c) {
        Recipe recipe;
        std::vector<Tensor> inputs;
        for (uint64_t attempt = 0;; ++attempt) {
            Rng rng(Rng::derive(seed, static_cast<uint64_t>(c) * 1000 + attempt));
            recipe = make_recipe(rng);
            inputs.clear();
            for (int si : recipe.input_steps) {
                inputs.push_back(recipe.steps[static_cast<size_t>(si)].init);
            }
            if (relu_inputs_safe(recipe, inputs)) break;
        }

        std::vector<Tensor> grads;
        eval_recipe(recipe, inputs, &grads);

        for (size_t k = 0; k < inputs.size(); ++k) {
            for (size_t j = 0; j < inputs[k].data.size(); ++j) {
                std::vector<Tensor> probe = inputs;
                probe[k].data[j] = inputs[k].data[j] + kFdStep;
                double fp = eval_recipe(recipe, probe, nullptr);
                probe[k].data[j] = inputs[k].data[j] - kFdStep;
                double fm = eval_recipe(recipe, probe, nullptr);
                double fd = (fp - fm) / (2.0 * kFdStep);
                double ad = grads[k].data[j];
                double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
                double rel = std::abs(ad - fd) / denom;
                rep.max_rel_err = std::max(rep.max_rel_err, rel);
                ++rep.coords_checked;
            }
        }
        ++rep.cases;
    }
    return rep;
}

} // namespace scoreag
