#include "scoreag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

#include <json.hpp>

#include "scoreag/errors.hpp"

namespace scoreag {

using nlohmann::json;

double accuracy(const Classifier& f, const Tensor& images, const std::vector<int>& labels,
                WeightSet ws) {
    if (labels.empty()) throw ContractError("accuracy: empty evaluation set");
    std::vector<Classification> preds = classify_batch(f, images, ws);
    if (preds.size() != labels.size()) {
        throw ShapeError("accuracy: " + std::to_string(preds.size()) + " images vs " +
                         std::to_string(labels.size()) + " labels");
    }
    int64_t correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (preds[i].label == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double median_lp(const std::vector<std::pair<Tensor, Tensor>>& pairs, NormKind p) {
    if (pairs.empty()) throw ContractError("median_lp: empty set");
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        d.push_back(p == NormKind::L2 ? l2_distance(a.flattened(), b.flattened())
                                      : linf_distance(a.flattened(), b.flattened()));
    }
    std::sort(d.begin(), d.end());
    size_t n = d.size();
    if (n % 2 == 1) return d[n / 2];
    return 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric k x k matrix.
// a is row-major and destroyed; eigenvalues land in w, eigenvectors in the
// columns of v.
void sym_eig(std::vector<double> a, int k, std::vector<double>& w, std::vector<double>& v) {
    v.assign(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) v[static_cast<size_t>(i) * k + i] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < k; ++i) {
            for (int j = i + 1; j < k; ++j) s += a[static_cast<size_t>(i) * k + j] * a[static_cast<size_t>(i) * k + j];
        }
        return std::sqrt(2.0 * s);
    };
    double scale = 0.0;
    for (int i = 0; i < k; ++i) scale = std::max(scale, std::abs(a[static_cast<size_t>(i) * k + i]));
    scale = std::max(scale, off_norm());
    double tol = std::max(1e-300, 1e-13 * scale);

    const int max_sweeps = 100;
    int sweep = 0;
    for (; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (int p = 0; p < k - 1; ++p) {
            for (int q = p + 1; q < k; ++q) {
                double apq = a[static_cast<size_t>(p) * k + q];
                if (std::abs(apq) <= 1e-300) continue;
                double app = a[static_cast<size_t>(p) * k + p];
                double aqq = a[static_cast<size_t>(q) * k + q];
                double theta = 0.5 * (aqq - app) / apq;
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < k; ++i) {
                    double aip = a[static_cast<size_t>(i) * k + p];
                    double aiq = a[static_cast<size_t>(i) * k + q];
                    a[static_cast<size_t>(i) * k + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * k + q] = s * aip + c * aiq;
                }
                for (int j = 0; j < k; ++j) {
                    double apj = a[static_cast<size_t>(p) * k + j];
                    double aqj = a[static_cast<size_t>(q) * k + j];
                    a[static_cast<size_t>(p) * k + j] = c * apj - s * aqj;
                    a[static_cast<size_t>(q) * k + j] = s * apj + c * aqj;
                }
                for (int i = 0; i < k; ++i) {
                    double vip = v[static_cast<size_t>(i) * k + p];
                    double viq = v[static_cast<size_t>(i) * k + q];
                    v[static_cast<size_t>(i) * k + p] = c * vip - s * viq;
                    v[static_cast<size_t>(i) * k + q] = s * vip + c * viq;
                }
            }
        }
    }
    if (sweep >= max_sweeps) throw Error("frechet: eigensolver did not converge");
    w.assign(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < k; ++i) w[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * k + i];
}

// B = V diag(sqrt(max(w,0))) V^T
std::vector<double> psd_sqrt(const std::vector<double>& a, int k) {
    std::vector<double> w, v;
    sym_eig(a, k, w, v);
    std::vector<double> b(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            double s = 0.0;
            for (int m = 0; m < k; ++m) {
                double lam = w[static_cast<size_t>(m)];
                if (lam > 0.0) {
                    s += v[static_cast<size_t>(i) * k + m] * std::sqrt(lam) *
                         v[static_cast<size_t>(j) * k + m];
                }
            }
            b[static_cast<size_t>(i) * k + j] = s;
        }
    }
    return b;
}

struct Moments {
    std::vector<double> mean;
    std::vector<double> cov; // (k,k) with 1/(n-1), + 1e-6 I
};

Moments fit_moments(const Tensor& feats) {
    int64_t n = feats.shape[0], k = feats.shape[1];
    Moments m;
    m.mean.assign(static_cast<size_t>(k), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < k; ++j) m.mean[static_cast<size_t>(j)] += feats.data[static_cast<size_t>(i * k + j)];
    }
    for (double& v : m.mean) v /= static_cast<double>(n);
    m.cov.assign(static_cast<size_t>(k) * k, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t a = 0; a < k; ++a) {
            double da = feats.data[static_cast<size_t>(i * k + a)] - m.mean[static_cast<size_t>(a)];
            for (int64_t b = 0; b < k; ++b) {
                double db = feats.data[static_cast<size_t>(i * k + b)] - m.mean[static_cast<size_t>(b)];
                m.cov[static_cast<size_t>(a * k + b)] += da * db;
            }
        }
    }
    double inv = 1.0 / static_cast<double>(n - 1);
    for (double& v : m.cov) v *= inv;
    for (int64_t a = 0; a < k; ++a) m.cov[static_cast<size_t>(a * k + a)] += 1e-6;
    return m;
}

} // namespace

double frechet_feature_distance(const Tensor& features_a, const Tensor& features_b) {
    if (features_a.rank() != 2 || features_b.rank() != 2 ||
        features_a.shape[1] != features_b.shape[1]) {
        throw ShapeError("frechet: feature sets must be (n,k) with equal k");
    }
    int64_t k = features_a.shape[1];
    if (features_a.shape[0] < k + 1 || features_b.shape[0] < k + 1) {
        throw ContractError("frechet: need at least feature_dim + 1 = " + std::to_string(k + 1) +
                            " samples per set");
    }
    Moments ma = fit_moments(features_a);
    Moments mb = fit_moments(features_b);

    int ki = static_cast<int>(k);
    std::vector<double> broot = psd_sqrt(mb.cov, ki);
    // M = B^1/2 * Sa * B^1/2, then symmetrize
    std::vector<double> tmp(static_cast<size_t>(k) * k, 0.0);
    std::vector<double> m(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < ki; ++i) {
        for (int j = 0; j < ki; ++j) {
            double s = 0.0;
            for (int p = 0; p < ki; ++p) {
                s += broot[static_cast<size_t>(i) * k + p] * ma.cov[static_cast<size_t>(p) * k + j];
            }
            tmp[static_cast<size_t>(i) * k + j] = s;
        }
    }
    for (int i = 0; i < ki; ++i) {
        for (int j = 0; j < ki; ++j) {
            double s = 0.0;
            for (int p = 0; p < ki; ++p) {
                s += tmp[static_cast<size_t>(i) * k + p] * broot[static_cast<size_t>(p) * k + j];
            }
            m[static_cast<size_t>(i) * k + j] = s;
        }
    }
    for (int i = 0; i < ki; ++i) {
        for (int j = i + 1; j < ki; ++j) {
            double avg = 0.5 * (m[static_cast<size_t>(i) * k + j] + m[static_cast<size_t>(j) * k + i]);
            m[static_cast<size_t>(i) * k + j] = avg;
            m[static_cast<size_t>(j) * k + i] = avg;
        }
    }
    std::vector<double> w, v;
    sym_eig(m, ki, w, v);
    double tr_sqrt = 0.0;
    for (double lam : w) {
        if (lam > 0.0) tr_sqrt += std::sqrt(lam);
    }
    double mean_term = 0.0;
    for (int64_t j = 0; j < k; ++j) {
        double d = ma.mean[static_cast<size_t>(j)] - mb.mean[static_cast<size_t>(j)];
        mean_term += d * d;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (int64_t j = 0; j < k; ++j) {
        tr_a += ma.cov[static_cast<size_t>(j * k + j)];
        tr_b += mb.cov[static_cast<size_t>(j * k + j)];
    }
    double d2 = mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
    return d2 < 0.0 ? 0.0 : d2; // numerical floor
}

// --------------------------------------------------------------------------
// benchmark orchestration

namespace {

Tensor take_rows(const Tensor& images, int64_t d, int64_t n) {
    Tensor out = Tensor::zeros({n, d});
    std::copy(images.data.begin(), images.data.begin() + n * d, out.data.begin());
    return out;
}

Tensor row(const Tensor& images, int64_t d, int64_t i) {
    Tensor out = Tensor::zeros({d});
    std::copy(images.data.begin() + i * d, images.data.begin() + (i + 1) * d, out.data.begin());
    return out;
}

void set_row(Tensor& images, int64_t d, int64_t i, const Tensor& value) {
    std::copy(value.data.begin(), value.data.end(), images.data.begin() + i * d);
}

} // namespace

MetricReport run_benchmark(const BenchmarkConfig& cfg) {
    if (!cfg.classifier) throw ContractError("run_benchmark: classifier required");
    const Classifier& f = *cfg.classifier;
    int64_t d = f.cfg.input_dim();
    int64_t total = cfg.eval_images.numel() / d;
    if (total == 0 || cfg.eval_labels.empty()) throw ContractError("run_benchmark: empty eval split");
    int64_t n = cfg.n_eval > 0 ? std::min<int64_t>(cfg.n_eval, total) : total;

    bool needs_score = cfg.attack == "gas" || cfg.attack == "gat" || cfg.defense == "gap";
    if (needs_score && !cfg.score) throw ContractError("run_benchmark: score model required");

    Tensor images = take_rows(cfg.eval_images.reshaped({total, d}), d, n);
    std::vector<int> labels(cfg.eval_labels.begin(), cfg.eval_labels.begin() + n);

    MetricReport rep;
    rep.attack = cfg.attack;
    rep.defense = cfg.defense;
    rep.n_samples = static_cast<int>(n);
    rep.clean_acc = accuracy(f, images, labels, cfg.weights);

    std::vector<Classification> clean_preds = classify_batch(f, images, cfg.weights);

    // --- attack phase (classifier-only knowledge; GAP is never attacked) ---
    Tensor attacked = images;
    std::vector<int> attacked_idx; // initially-correct rows, the adv denominator
    for (int64_t i = 0; i < n; ++i) {
        if (clean_preds[static_cast<size_t>(i)].label == labels[static_cast<size_t>(i)]) {
            attacked_idx.push_back(static_cast<int>(i));
        }
    }

    if (cfg.attack == "none") {
        rep.adv_acc = rep.clean_acc;
        rep.n_attacked = static_cast<int>(n);
    } else if (cfg.attack == "fgsm" || cfg.attack == "pgd-l2" || cfg.attack == "pgd-linf") {
        NormBudget budget = cfg.budget;
        if (cfg.attack == "pgd-l2") budget.norm = NormKind::L2;
        if (cfg.attack == "pgd-linf") budget.norm = NormKind::Linf;
        std::exception_ptr err = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
        for (size_t k = 0; k < attacked_idx.size(); ++k) {
            try {
                int64_t i = attacked_idx[k];
                Tensor x = row(images, d, i);
                Tensor adv;
                if (cfg.attack == "fgsm") {
                    adv = fgsm(f, x, labels[static_cast<size_t>(i)], budget.epsilon, cfg.weights);
                } else {
                    Rng rng(Rng::derive(cfg.seed, 0xA77A + static_cast<uint64_t>(i)));
                    adv = pgd_restarts(f, x, labels[static_cast<size_t>(i)], budget,
                                       cfg.pgd_n_restarts, rng, cfg.weights);
                }
                set_row(attacked, d, i, adv); // rows are disjoint across workers
            } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
                {
                    if (!err) err = std::current_exception();
                }
            }
        }
        if (err) std::rethrow_exception(err);
    } else if (cfg.attack == "gat") {
        Tensor sub = Tensor::zeros({static_cast<int64_t>(attacked_idx.size()), d});
        std::vector<int> sub_labels;
        for (size_t k = 0; k < attacked_idx.size(); ++k) {
            set_row(sub, d, static_cast<int64_t>(k), row(images, d, attacked_idx[k]));
            sub_labels.push_back(labels[static_cast<size_t>(attacked_idx[k])]);
        }
        std::vector<TaskResult> res =
            run_gat_batch(*cfg.score, f, cfg.attack_spec, sub, sub_labels, cfg.seed);
        for (size_t k = 0; k < attacked_idx.size(); ++k) {
            set_row(attacked, d, attacked_idx[k], res[k].output);
        }
    } else if (cfg.attack == "gas") {
        AttackSpec spec = cfg.attack_spec;
        spec.mode = "gas";
        std::vector<TaskResult> res = run_gas_batch(*cfg.score, f, spec, labels, cfg.seed);
        for (int64_t i = 0; i < n; ++i) set_row(attacked, d, i, res[static_cast<size_t>(i)].output);
        attacked_idx.clear();
        for (int64_t i = 0; i < n; ++i) attacked_idx.push_back(static_cast<int>(i)); // synthesis: no exclusion
    } else {
        throw ConfigError("run_benchmark: unknown attack '" + cfg.attack + "'");
    }

    if (cfg.attack != "none") {
        if (attacked_idx.empty()) throw ContractError("run_benchmark: no correctly classified samples to attack");
        std::vector<Classification> adv_preds = classify_batch(f, attacked, cfg.weights);
        int64_t ok = 0;
        std::vector<std::pair<Tensor, Tensor>> pairs;
        for (int i : attacked_idx) {
            if (adv_preds[static_cast<size_t>(i)].label == labels[static_cast<size_t>(i)]) ++ok;
            pairs.emplace_back(row(images, d, i), row(attacked, d, i));
        }
        rep.adv_acc = static_cast<double>(ok) / static_cast<double>(attacked_idx.size());
        rep.n_attacked = static_cast<int>(attacked_idx.size());
        if (cfg.attack != "gas") {
            rep.median_l2 = median_lp(pairs, NormKind::L2);
            rep.median_linf = median_lp(pairs, NormKind::Linf);
        }
        int64_t fd = f.cfg.feature_dim;
        if (n >= fd + 1 && static_cast<int64_t>(attacked_idx.size()) >= fd + 1) {
            Tensor fa = classifier_features(f, attacked, cfg.weights);
            Tensor fb = classifier_features(f, images, cfg.weights);
            rep.frechet = frechet_feature_distance(fa, fb);
        }
    }

    // --- defense phase (preprocessor-blackbox) ---
    if (cfg.defense == "gap") {
        std::vector<TaskResult> pur = run_gap_batch(*cfg.score, cfg.purify, attacked,
                                                    Rng::derive(cfg.seed, 0xDEF0));
        Tensor purified = attacked;
        for (int64_t i = 0; i < n; ++i) set_row(purified, d, i, pur[static_cast<size_t>(i)].output);
        std::vector<Classification> rob_preds = classify_batch(f, purified, cfg.weights);
        int64_t ok = 0;
        for (int i : attacked_idx) {
            if (rob_preds[static_cast<size_t>(i)].label == labels[static_cast<size_t>(i)]) ++ok;
        }
        rep.robust_acc = static_cast<double>(ok) / static_cast<double>(attacked_idx.size());

        std::vector<TaskResult> purc = run_gap_batch(*cfg.score, cfg.purify, images,
                                                     Rng::derive(cfg.seed, 0xDEF1));
        Tensor purified_clean = images;
        for (int64_t i = 0; i < n; ++i) {
            set_row(purified_clean, d, i, purc[static_cast<size_t>(i)].output);
        }
        rep.defended_clean_acc = accuracy(f, purified_clean, labels, cfg.weights);
    } else if (cfg.defense != "none") {
        throw ConfigError("run_benchmark: unknown defense '" + cfg.defense + "'");
    }

    json echo;
    echo["attack"] = cfg.attack;
    echo["defense"] = cfg.defense;
    echo["n_eval"] = n;
    echo["seed"] = cfg.seed;
    echo["epsilon"] = cfg.budget.epsilon;
    echo["s_y"] = cfg.attack_spec.s_y;
    echo["s_x"] = cfg.attack == "gat" ? cfg.attack_spec.s_x : cfg.purify.s_x;
    rep.config_echo = echo.dump();
    return rep;
}

std::string metric_report_json(const MetricReport& r) {
    json j;
    j["attack"] = r.attack;
    j["defense"] = r.defense;
    j["clean_acc"] = r.clean_acc;
    j["adv_acc"] = r.adv_acc;
    j["robust_acc"] = r.robust_acc;
    j["defended_clean_acc"] = r.defended_clean_acc;
    j["median_l2"] = r.median_l2;
    j["median_linf"] = r.median_linf;
    j["frechet"] = r.frechet;
    j["n_samples"] = r.n_samples;
    j["n_attacked"] = r.n_attacked;
    j["config"] = json::parse(r.config_echo.empty() ? "{}" : r.config_echo);
    return j.dump(2);
}

void write_metric_report(const std::string& json_path, const MetricReport& r) {
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot open metric report: " + json_path);
    os << metric_report_json(r) << "\n";
}

void append_metric_csv(const std::string& csv_path, const MetricReport& r, double s_y, double s_x) {
    bool fresh = !std::ifstream(csv_path).good();
    std::ofstream os(csv_path, std::ios::app);
    if (!os) throw IoError("cannot open metric csv: " + csv_path);
    if (fresh) {
        os << "attack,defense,s_y,s_x,n_samples,clean_acc,adv_acc,robust_acc,defended_clean_acc,"
              "median_l2,median_linf,frechet\n";
    }
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  r.attack.c_str(), r.defense.c_str(), s_y, s_x, r.n_samples, r.clean_acc, r.adv_acc,
                  r.robust_acc, r.defended_clean_acc, r.median_l2, r.median_linf, r.frechet);
    os << buf;
}

} // namespace scoreag
