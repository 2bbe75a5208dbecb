#include "scoreag/config.hpp"

#include <filesystem>
#include <fstream>

#include "scoreag/errors.hpp"

namespace scoreag {

using nlohmann::json;

const char* kScoreagVersion = "0.1.0";

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config section '" + ctx + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) {
            if (it.key() == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown config key '" + ctx + "." + it.key() + "'");
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

TrainSection parse_train(const json& j, const std::string& ctx, TrainSection def) {
    check_keys(j, {"epochs", "batch_size", "lr", "momentum", "weight_decay", "ema_decay",
                   "lr_cycles", "lambda_weighting", "uncond_fraction"}, ctx);
    TrainSection t = def;
    get_to(j, "epochs", t.epochs);
    get_to(j, "batch_size", t.batch_size);
    get_to(j, "lr", t.lr);
    get_to(j, "momentum", t.momentum);
    get_to(j, "weight_decay", t.weight_decay);
    get_to(j, "ema_decay", t.ema_decay);
    get_to(j, "lr_cycles", t.lr_cycles);
    get_to(j, "lambda_weighting", t.lambda_weighting);
    get_to(j, "uncond_fraction", t.uncond_fraction);
    return t;
}

json train_json(const TrainSection& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"lr", t.lr},
            {"momentum", t.momentum},
            {"weight_decay", t.weight_decay},
            {"ema_decay", t.ema_decay},
            {"lr_cycles", t.lr_cycles},
            {"lambda_weighting", t.lambda_weighting},
            {"uncond_fraction", t.uncond_fraction}};
}

} // namespace

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j, {"data", "schedule", "score_model", "classifier", "sampler", "task", "baseline",
                   "eval", "seed", "out_dir"}, "config");
    RunConfig c;
    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, {"kind", "k", "n_per_class", "eval_n_per_class", "size", "separation",
                       "images", "labels", "eval_images", "eval_labels"}, "data");
        get_to(d, "kind", c.data.kind);
        get_to(d, "k", c.data.k);
        get_to(d, "n_per_class", c.data.n_per_class);
        get_to(d, "eval_n_per_class", c.data.eval_n_per_class);
        get_to(d, "size", c.data.size);
        get_to(d, "separation", c.data.separation);
        get_to(d, "images", c.data.images);
        get_to(d, "labels", c.data.labels);
        get_to(d, "eval_images", c.data.eval_images);
        get_to(d, "eval_labels", c.data.eval_labels);
        if (c.data.kind != "shapes" && c.data.kind != "blobs2d" && c.data.kind != "idx") {
            throw ConfigError("data.kind must be shapes, blobs2d or idx");
        }
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_keys(s, {"beta_min", "beta_max", "t_eps"}, "schedule");
        get_to(s, "beta_min", c.schedule.beta_min);
        get_to(s, "beta_max", c.schedule.beta_max);
        get_to(s, "t_eps", c.schedule.t_eps);
    }
    if (j.contains("score_model")) {
        const json& s = j.at("score_model");
        check_keys(s, {"hidden", "time_embed_dim", "class_embed_dim", "nonlin", "train"},
                   "score_model");
        get_to(s, "hidden", c.score_model.hidden);
        get_to(s, "time_embed_dim", c.score_model.time_embed_dim);
        get_to(s, "class_embed_dim", c.score_model.class_embed_dim);
        get_to(s, "nonlin", c.score_model.nonlin);
        if (s.contains("train")) c.score_model.train = parse_train(s.at("train"), "score_model.train", c.score_model.train);
    }
    if (j.contains("classifier")) {
        const json& s = j.at("classifier");
        check_keys(s, {"kind", "conv_channels1", "conv_channels2", "mlp_hidden", "feature_dim",
                       "nonlin", "train"}, "classifier");
        get_to(s, "kind", c.classifier.kind);
        get_to(s, "conv_channels1", c.classifier.conv_channels1);
        get_to(s, "conv_channels2", c.classifier.conv_channels2);
        get_to(s, "mlp_hidden", c.classifier.mlp_hidden);
        get_to(s, "feature_dim", c.classifier.feature_dim);
        get_to(s, "nonlin", c.classifier.nonlin);
        if (s.contains("train")) c.classifier.train = parse_train(s.at("train"), "classifier.train", c.classifier.train);
    }
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, {"n_steps", "kind", "t_start", "t_end", "stop_gradient_through_score"},
                   "sampler");
        get_to(s, "n_steps", c.sampler.n_steps);
        get_to(s, "kind", c.sampler.kind);
        get_to(s, "t_start", c.sampler.t_start);
        get_to(s, "t_end", c.sampler.t_end);
        get_to(s, "stop_gradient_through_score", c.sampler.stop_gradient_through_score);
    }
    if (j.contains("task")) {
        const json& s = j.at("task");
        check_keys(s, {"mode", "s_y", "s_x", "target_class", "max_restarts", "n_samples", "weights"},
                   "task");
        get_to(s, "mode", c.task.mode);
        get_to(s, "s_y", c.task.s_y);
        get_to(s, "s_x", c.task.s_x);
        get_to(s, "target_class", c.task.target_class);
        get_to(s, "max_restarts", c.task.max_restarts);
        get_to(s, "n_samples", c.task.n_samples);
        get_to(s, "weights", c.task.weights);
    }
    if (j.contains("baseline")) {
        const json& s = j.at("baseline");
        check_keys(s, {"attack", "epsilon", "step_size", "n_iter", "n_restarts"}, "baseline");
        get_to(s, "attack", c.baseline.attack);
        get_to(s, "epsilon", c.baseline.epsilon);
        get_to(s, "step_size", c.baseline.step_size);
        get_to(s, "n_iter", c.baseline.n_iter);
        get_to(s, "n_restarts", c.baseline.n_restarts);
    }
    if (j.contains("eval")) {
        const json& s = j.at("eval");
        check_keys(s, {"attacks", "defense", "purify_s_x", "n_eval"}, "eval");
        get_to(s, "attacks", c.eval.attacks);
        get_to(s, "defense", c.eval.defense);
        get_to(s, "purify_s_x", c.eval.purify_s_x);
        get_to(s, "n_eval", c.eval.n_eval);
    }
    get_to(j, "seed", c.seed);
    get_to(j, "out_dir", c.out_dir);
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config file not found: " + path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["data"] = {{"kind", data.kind},
                 {"k", data.k},
                 {"n_per_class", data.n_per_class},
                 {"eval_n_per_class", data.eval_n_per_class},
                 {"size", data.size},
                 {"separation", data.separation},
                 {"images", data.images},
                 {"labels", data.labels},
                 {"eval_images", data.eval_images},
                 {"eval_labels", data.eval_labels}};
    j["schedule"] = {{"beta_min", schedule.beta_min},
                     {"beta_max", schedule.beta_max},
                     {"t_eps", schedule.t_eps}};
    j["score_model"] = {{"hidden", score_model.hidden},
                        {"time_embed_dim", score_model.time_embed_dim},
                        {"class_embed_dim", score_model.class_embed_dim},
                        {"nonlin", score_model.nonlin},
                        {"train", train_json(score_model.train)}};
    j["classifier"] = {{"kind", classifier.kind},
                       {"conv_channels1", classifier.conv_channels1},
                       {"conv_channels2", classifier.conv_channels2},
                       {"mlp_hidden", classifier.mlp_hidden},
                       {"feature_dim", classifier.feature_dim},
                       {"nonlin", classifier.nonlin},
                       {"train", train_json(classifier.train)}};
    j["sampler"] = {{"n_steps", sampler.n_steps},
                    {"kind", sampler.kind},
                    {"t_start", sampler.t_start},
                    {"t_end", sampler.t_end},
                    {"stop_gradient_through_score", sampler.stop_gradient_through_score}};
    j["task"] = {{"mode", task.mode},     {"s_y", task.s_y},
                 {"s_x", task.s_x},       {"target_class", task.target_class},
                 {"max_restarts", task.max_restarts}, {"n_samples", task.n_samples},
                 {"weights", task.weights}};
    j["baseline"] = {{"attack", baseline.attack},
                     {"epsilon", baseline.epsilon},
                     {"step_size", baseline.step_size},
                     {"n_iter", baseline.n_iter},
                     {"n_restarts", baseline.n_restarts}};
    j["eval"] = {{"attacks", eval.attacks},
                 {"defense", eval.defense},
                 {"purify_s_x", eval.purify_s_x},
                 {"n_eval", eval.n_eval}};
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    return j;
}

std::string RunConfig::hash() const {
    std::string s = to_json().dump();
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_manifest(const std::string& out_dir, const std::string& subcommand, const RunConfig& cfg,
                    const std::vector<std::string>& outputs) {
    std::filesystem::create_directories(out_dir);
    json m;
    m["version"] = kScoreagVersion;
    m["subcommand"] = subcommand;
    m["config_hash"] = cfg.hash();
    m["config"] = cfg.to_json();
    m["outputs"] = outputs;
    std::ofstream os(out_dir + "/manifest.json");
    if (!os) throw IoError("cannot write manifest in " + out_dir);
    os << m.dump(2) << "\n";
}

} // namespace scoreag
