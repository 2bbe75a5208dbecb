#include "scoreag/tasks.hpp"

#include <cstdio>
#include <exception>
#include <fstream>

#include <json.hpp>

#include "scoreag/errors.hpp"

namespace scoreag {

void AttackSpec::validate(int64_t dim, int n_classes) const {
    if (mode != "gas" && mode != "gat") throw ContractError("AttackSpec: mode must be gas or gat");
    if (true_class < 1 || true_class > n_classes) {
        throw ContractError("AttackSpec: true_class outside {1.." + std::to_string(n_classes) + "}");
    }
    if (target_class != 0) {
        if (target_class < 1 || target_class > n_classes) {
            throw ContractError("AttackSpec: target_class outside {1.." + std::to_string(n_classes) + "}");
        }
        if (target_class == true_class) {
            throw ContractError("AttackSpec: target_class must differ from true_class");
        }
    }
    if (s_y < 0.0 || s_x < 0.0) throw ContractError("AttackSpec: scales >= 0");
    if (max_restarts < 0) throw ContractError("AttackSpec: max_restarts >= 0");
    if (mode == "gat") {
        if (!reference) throw ContractError("AttackSpec: gat requires a reference image");
        if (reference->numel() != dim) {
            throw ShapeError("AttackSpec: reference dim " + std::to_string(reference->numel()) +
                             " != model dim " + std::to_string(dim));
        }
    }
}

void PurifySpec::validate() const {
    if (s_x < 0.0) throw ContractError("PurifySpec: s_x >= 0");
}

namespace {

bool attack_succeeded(const AttackSpec& spec, int pred) {
    return spec.target_class != 0 ? pred == spec.target_class : pred != spec.true_class;
}

GuidanceSpec attack_guidance(const Classifier& f, const AttackSpec& spec) {
    GuidanceSpec g;
    g.class_condition = spec.true_class;
    if (spec.s_y > 0.0 || spec.target_class != 0) {
        ClassifierGuidance cg;
        cg.classifier = &f;
        cg.weights = spec.classifier_weights;
        cg.target_class = spec.target_class;
        cg.avoid_class = spec.true_class;
        cg.scale = spec.s_y;
        g.classifier_term = cg;
    }
    if (spec.mode == "gat") {
        ReconstructionGuidance rg;
        rg.reference = spec.reference->flattened();
        rg.scale = spec.s_x;
        g.reconstruction_term = rg;
    }
    return g;
}

} // namespace

TaskResult gas(const ScoreFunction& s, const Classifier& f, const AttackSpec& spec, uint64_t seed) {
    spec.validate(s.dim(), f.cfg.n_classes);
    if (s.dim() != f.cfg.input_dim()) {
        throw ShapeError("gas: score dim " + std::to_string(s.dim()) + " != classifier dim " +
                         std::to_string(f.cfg.input_dim()));
    }
    GuidanceSpec guidance = attack_guidance(f, spec);

    TaskResult r;
    r.mode = "gas";
    r.y_true = spec.true_class;
    r.y_target = spec.target_class;
    r.seed = seed;
    for (int attempt = 0;; ++attempt) {
        Rng rng(Rng::derive(seed, static_cast<uint64_t>(attempt)));
        SolveResult sol = solve(s, guidance, spec.sampler, rng);
        int pred = classify(f, sol.x0, spec.classifier_weights).label;
        r.y_pred_after = pred;
        r.success = attack_succeeded(spec, pred);
        r.restarts = attempt;
        if (r.success || attempt >= spec.max_restarts) {
            r.output = std::move(sol.x0);
            r.trajectory = std::move(sol.trajectory);
            break;
        }
    }
    return r;
}

TaskResult gat(const ScoreFunction& s, const Classifier& f, const AttackSpec& spec, uint64_t seed) {
    spec.validate(s.dim(), f.cfg.n_classes);
    if (s.dim() != f.cfg.input_dim()) {
        throw ShapeError("gat: score dim " + std::to_string(s.dim()) + " != classifier dim " +
                         std::to_string(f.cfg.input_dim()));
    }
    const Tensor& ref = *spec.reference;

    TaskResult r;
    r.mode = "gat";
    r.y_true = spec.true_class;
    r.y_target = spec.target_class;
    r.seed = seed;
    r.y_pred_before = classify(f, ref, spec.classifier_weights).label;
    if (r.y_pred_before != spec.true_class) {
        // already misclassified: nothing to attack
        r.input_warning = true;
        r.y_pred_after = r.y_pred_before;
        r.output = ref;
        return r;
    }

    GuidanceSpec guidance = attack_guidance(f, spec);
    Rng rng(Rng::derive(seed, 0));
    SolveResult sol = solve(s, guidance, spec.sampler, rng);
    r.y_pred_after = classify(f, sol.x0, spec.classifier_weights).label;
    r.success = attack_succeeded(spec, r.y_pred_after);
    r.l2 = l2_distance(sol.x0, ref.flattened());
    r.linf = linf_distance(sol.x0, ref.flattened());
    r.output = std::move(sol.x0);
    r.trajectory = std::move(sol.trajectory);
    return r;
}

TaskResult gap(const ScoreFunction& s, const PurifySpec& spec, const Tensor& x_adv, uint64_t seed) {
    spec.validate();
    if (x_adv.numel() != s.dim()) {
        throw ShapeError("gap: input dim " + std::to_string(x_adv.numel()) + " != model dim " +
                         std::to_string(s.dim()));
    }
    for (double v : x_adv.data) {
        if (v < -1e-9 || v > 1.0 + 1e-9) {
            throw ContractError("gap: input values must lie in [0,1]");
        }
    }
    GuidanceSpec guidance;
    guidance.class_condition = 0; // unconditional base score
    ReconstructionGuidance rg;
    rg.reference = x_adv.flattened();
    rg.scale = spec.s_x;
    guidance.reconstruction_term = rg;

    Rng rng(Rng::derive(seed, 0));
    SolveResult sol = solve(s, guidance, spec.sampler, rng);

    TaskResult r;
    r.mode = "gap";
    r.seed = seed;
    r.l2 = l2_distance(sol.x0, rg.reference);
    r.linf = linf_distance(sol.x0, rg.reference);
    r.output = std::move(sol.x0);
    r.trajectory = std::move(sol.trajectory);
    return r;
}

namespace {

template <typename Fn>
std::vector<TaskResult> fan_out(int n, uint64_t seed, Fn&& one) {
    std::vector<TaskResult> results(static_cast<size_t>(n));
    std::exception_ptr first_error = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < n; ++i) {
        try {
            results[static_cast<size_t>(i)] = one(i, Rng::derive(seed, static_cast<uint64_t>(i)));
            results[static_cast<size_t>(i)].index = i;
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            {
                if (!first_error) first_error = std::current_exception();
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

} // namespace

std::vector<TaskResult> run_gas_batch(const ScoreFunction& s, const Classifier& f,
                                      const AttackSpec& spec, const std::vector<int>& classes,
                                      uint64_t seed) {
    return fan_out(static_cast<int>(classes.size()), seed, [&](int i, uint64_t sub) {
        AttackSpec one = spec;
        one.true_class = classes[static_cast<size_t>(i)];
        if (one.target_class == one.true_class) one.target_class = 0;
        return gas(s, f, one, sub);
    });
}

std::vector<TaskResult> run_gat_batch(const ScoreFunction& s, const Classifier& f,
                                      const AttackSpec& spec, const Tensor& images,
                                      const std::vector<int>& labels, uint64_t seed) {
    int64_t d = s.dim();
    int n = static_cast<int>(labels.size());
    if (images.numel() != d * n) throw ShapeError("run_gat_batch: image/label count mismatch");
    return fan_out(n, seed, [&](int i, uint64_t sub) {
        AttackSpec one = spec;
        one.mode = "gat";
        one.true_class = labels[static_cast<size_t>(i)];
        if (one.target_class == one.true_class) one.target_class = 0;
        Tensor ref = Tensor::zeros({d});
        std::copy(images.data.begin() + static_cast<int64_t>(i) * d,
                  images.data.begin() + static_cast<int64_t>(i + 1) * d, ref.data.begin());
        one.reference = std::move(ref);
        return gat(s, f, one, sub);
    });
}

std::vector<TaskResult> run_gap_batch(const ScoreFunction& s, const PurifySpec& spec,
                                      const Tensor& images, uint64_t seed) {
    int64_t d = s.dim();
    int n = static_cast<int>(images.numel() / d);
    return fan_out(n, seed, [&](int i, uint64_t sub) {
        Tensor x = Tensor::zeros({d});
        std::copy(images.data.begin() + static_cast<int64_t>(i) * d,
                  images.data.begin() + static_cast<int64_t>(i + 1) * d, x.data.begin());
        return gap(s, spec, x, sub);
    });
}

void write_results_csv(const std::string& path, const std::vector<TaskResult>& results) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open results file: " + path);
    os << "index,mode,y_true,y_target,y_pred_before,y_pred_after,success,l2,linf,restarts,seed\n";
    char buf[256];
    for (const TaskResult& r : results) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%d,%d,%d,%d,%.9g,%.9g,%d,%llu\n", r.index,
                      r.mode.c_str(), r.y_true, r.y_target, r.y_pred_before, r.y_pred_after,
                      r.success ? 1 : 0, r.l2, r.linf, r.restarts,
                      static_cast<unsigned long long>(r.seed));
        os << buf;
    }
}

std::string task_result_json(const TaskResult& r) {
    nlohmann::json j;
    j["index"] = r.index;
    j["mode"] = r.mode;
    j["y_true"] = r.y_true;
    j["y_target"] = r.y_target;
    j["y_pred_before"] = r.y_pred_before;
    j["y_pred_after"] = r.y_pred_after;
    j["success"] = r.success;
    j["l2"] = r.l2;
    j["linf"] = r.linf;
    j["restarts"] = r.restarts;
    j["seed"] = r.seed;
    j["input_warning"] = r.input_warning;
    return j.dump();
}

} // namespace scoreag
